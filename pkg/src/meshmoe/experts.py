"""The expert pool behind a uniform predict interface.

Three trainable desk-scale experts consume different views of a mesh
(walk sequences, face statistics, edge statistics), plus scripted oracle
experts for controlled routing tests.  Classification experts return a
(C,) probability vector; the edge segmenter returns an (E, S) row-softmax
matrix.  Oracles are frozen and per-mesh seeded: the same mesh always
draws the same prediction regardless of training step.
"""

import numpy as np

from . import autodiff as ad
from . import layers
from .autodiff import Tensor
from .mesh import Mesh
from .optim import Adam
from .rng import Rng, derive
from .walks import extract_walks, walk_feature_batch


class ExpertError(ValueError):
    pass


class WalkRnnExpert:
    """GRU over 8 walks; per-walk class logits are averaged, then softmaxed."""

    kind = "walk_rnn"
    trainable = True

    def __init__(self, name: str, num_classes: int, seed: int, hidden: int = 32,
                 walk_count: int = 8):
        self.name = name
        self.num_classes = num_classes
        self.hidden = hidden
        self.walk_count = walk_count
        self.params = {}
        layers.init_gru(self.params, "gru", 4, hidden, derive(seed, name, "gru"))
        self.params["head.w"] = layers.glorot((hidden, num_classes),
                                              derive(seed, name, "head"))
        self.params["head.b"] = layers.zeros((num_classes,))

    def predict(self, mesh: Mesh, seed: int) -> Tensor:
        walks = extract_walks(mesh, self.walk_count, seed)
        feats = walk_feature_batch(walks)                     # (W, L, 4)
        h = layers.gru_forward(Tensor(feats), self.params, "gru", self.hidden)
        logits = layers.linear(h, self.params["head.w"], self.params["head.b"])
        return ad.softmax(ad.tmean(logits, axis=0), axis=-1)


class FaceMlpExpert:
    """Mean-pooled 2-layer perceptron over per-face (centroid, normal, area)."""

    kind = "face_mlp"
    trainable = True

    def __init__(self, name: str, num_classes: int, seed: int, hidden: int = 32):
        self.name = name
        self.num_classes = num_classes
        self.params = {
            "mlp.w1": layers.glorot((7, hidden), derive(seed, name, "w1")),
            "mlp.b1": layers.zeros((hidden,)),
            "mlp.w2": layers.glorot((hidden, hidden), derive(seed, name, "w2")),
            "mlp.b2": layers.zeros((hidden,)),
            "head.w": layers.glorot((hidden, num_classes), derive(seed, name, "head")),
            "head.b": layers.zeros((num_classes,)),
        }

    @staticmethod
    def face_features(mesh: Mesh) -> np.ndarray:
        corners = mesh.vertices[mesh.faces]                   # (F, 3, 3)
        centroids = corners.mean(axis=1)
        cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        norms = np.linalg.norm(cross, axis=1, keepdims=True)
        areas = norms / 2.0
        # zero-area faces contribute zero normals rather than NaN
        normals = np.where(norms > 1e-12, cross / np.maximum(norms, 1e-12), 0.0)
        return np.concatenate([centroids, normals, areas], axis=1)

    def predict(self, mesh: Mesh, seed: int | None = None) -> Tensor:
        if mesh.face_count == 0:
            raise ExpertError(f"{mesh.mesh_id}: face expert needs faces")
        x = Tensor(self.face_features(mesh))
        h = ad.relu(layers.linear(x, self.params["mlp.w1"], self.params["mlp.b1"]))
        h = ad.relu(layers.linear(h, self.params["mlp.w2"], self.params["mlp.b2"]))
        pooled = ad.tmean(h, axis=0)
        logits = layers.linear(ad.reshape(pooled, (1, -1)),
                               self.params["head.w"], self.params["head.b"])
        return ad.softmax(ad.reshape(logits, (self.num_classes,)), axis=-1)


class EdgeSegmenterExpert:
    """Per-edge perceptron over (length, dihedral proxy, midpoint height)."""

    kind = "edge_seg"
    trainable = True

    def __init__(self, name: str, num_classes: int, seed: int, hidden: int = 32):
        self.name = name
        self.num_classes = num_classes
        self.params = {
            "mlp.w1": layers.glorot((3, hidden), derive(seed, name, "w1")),
            "mlp.b1": layers.zeros((hidden,)),
            "mlp.w2": layers.glorot((hidden, hidden), derive(seed, name, "w2")),
            "mlp.b2": layers.zeros((hidden,)),
            "head.w": layers.glorot((hidden, num_classes), derive(seed, name, "head")),
            "head.b": layers.zeros((num_classes,)),
        }

    @staticmethod
    def edge_features(mesh: Mesh) -> np.ndarray:
        corners = mesh.vertices[mesh.faces]
        cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        norms = np.linalg.norm(cross, axis=1, keepdims=True)
        normals = np.where(norms > 1e-12, cross / np.maximum(norms, 1e-12), 0.0)
        features = np.zeros((mesh.edge_count, 3))
        midpoints = mesh.vertices[mesh.edges].mean(axis=1)
        features[:, 0] = mesh.edge_lengths
        for e, incident in enumerate(mesh.edge_faces):
            if len(incident) == 2:
                # 1 - cos(dihedral); boundary edges stay at the flat value 0
                features[e, 1] = 1.0 - float(normals[incident[0]] @ normals[incident[1]])
        features[:, 2] = midpoints[:, 2]
        return features

    def predict(self, mesh: Mesh, seed: int | None = None) -> Tensor:
        if mesh.edge_count == 0:
            raise ExpertError(f"{mesh.mesh_id}: edge expert needs edges")
        x = Tensor(self.edge_features(mesh))
        h = ad.relu(layers.linear(x, self.params["mlp.w1"], self.params["mlp.b1"]))
        h = ad.relu(layers.linear(h, self.params["mlp.w2"], self.params["mlp.b2"]))
        logits = layers.linear(h, self.params["head.w"], self.params["head.b"])
        return ad.softmax(logits, axis=-1)               # (E, S) rows


class OracleExpert:
    """Scripted non-trainable expert, perfect (or near) on one class only.

    On specialty meshes it emits the true one-hot with probability
    `accuracy`; everywhere else (and on misses) the behavior parameter
    applies: `random_onehot` draws a uniformly random class one-hot,
    `uniform` returns the flat distribution.  The draw is keyed by mesh
    id alone, so a given mesh always gets the same answer.
    """

    kind = "oracle"
    trainable = False
    params = None

    def __init__(self, name: str, num_classes: int, specialty_class: int,
                 accuracy: float = 1.0, behavior: str = "random_onehot", seed: int = 0):
        if not (0.0 <= accuracy <= 1.0):
            raise ExpertError("accuracy must lie in [0, 1]")
        if behavior not in ("random_onehot", "uniform"):
            raise ExpertError(f"unknown off-specialty behavior: {behavior}")
        if not (0 <= specialty_class < num_classes):
            raise ExpertError("specialty class out of range")
        self.name = name
        self.num_classes = num_classes
        self.specialty_class = specialty_class
        self.accuracy = accuracy
        self.behavior = behavior
        self.seed = seed

    def predict(self, mesh: Mesh, seed: int | None = None) -> Tensor:
        rng = Rng(derive(self.seed, "oracle", self.name, mesh.mesh_id))
        on_specialty = (mesh.class_label == self.specialty_class
                        and rng.uniform() < self.accuracy)
        if on_specialty:
            cls = self.specialty_class
        elif self.behavior == "uniform":
            return Tensor(np.full(self.num_classes, 1.0 / self.num_classes))
        else:
            cls = rng.randbelow(self.num_classes)
        probs = np.zeros(self.num_classes)
        probs[cls] = 1.0
        return Tensor(probs)


def make_expert(spec: str, name: str, num_classes: int, seed: int, hidden: int = 32):
    """Registry: 'walk_rnn' | 'face_mlp' | 'edge_seg' | 'oracle:CLS[:ACC[:BEHAVIOR]]'."""
    if spec == "walk_rnn":
        return WalkRnnExpert(name, num_classes, seed, hidden=hidden)
    if spec == "face_mlp":
        return FaceMlpExpert(name, num_classes, seed, hidden=hidden)
    if spec == "edge_seg":
        return EdgeSegmenterExpert(name, num_classes, seed, hidden=hidden)
    if spec.startswith("oracle:"):
        parts = spec.split(":")
        specialty = int(parts[1])
        accuracy = float(parts[2]) if len(parts) > 2 else 1.0
        behavior = parts[3] if len(parts) > 3 else "random_onehot"
        return OracleExpert(name, num_classes, specialty, accuracy, behavior, seed=seed)
    raise ExpertError(f"unknown expert spec: {spec}")


def build_experts(specs: list, num_classes: int, seed: int, hidden: int = 32) -> list:
    """Instantiate the pool with unique names (spec + position)."""
    experts = []
    for idx, spec in enumerate(specs):
        base = spec.replace(":", "_").replace(".", "")
        experts.append(make_expert(spec, f"{base}_{idx}", num_classes,
                                   derive(seed, "expert", idx), hidden=hidden))
    return experts


def expert_loss(expert, mesh: Mesh, seed: int) -> Tensor:
    """Supervised loss for one mesh: CE on the class or mean CE over edges."""
    pred = expert.predict(mesh, seed)
    if pred.ndim == 2:
        if mesh.edge_labels is None:
            raise ExpertError(f"{mesh.mesh_id}: no edge labels")
        return layers.cross_entropy_rows(pred, mesh.edge_labels)
    if mesh.class_label is None:
        raise ExpertError(f"{mesh.mesh_id}: no class label")
    return layers.cross_entropy(pred, mesh.class_label)


def train_expert_supervised(expert, meshes: list, epochs: int = 10,
                            batch_size: int = 8, lr: float = 1e-3,
                            seed: int = 0) -> list:
    """Plain supervised pre-training; returns per-epoch mean losses."""
    if not expert.trainable:
        raise ExpertError(f"{expert.name} is not trainable")
    optimizer = Adam(expert.params, lr=lr)
    history = []
    for epoch in range(epochs):
        order = list(range(len(meshes)))
        Rng(derive(seed, "order", epoch)).shuffle(order)
        losses = []
        for start in range(0, len(order), batch_size):
            optimizer.zero_grad()
            terms = []
            for i in order[start:start + batch_size]:
                mesh = meshes[i]
                terms.append(expert_loss(expert, mesh,
                                         derive(seed, "walks", epoch, mesh.mesh_id)))
            loss = ad.tmean(ad.stack(terms))
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
    return history


def save_expert_checkpoint(experts: list, path) -> None:
    """Write every trainable expert's parameters under expert.<name>.<key>."""
    from .checkpoint import save_checkpoint
    flat = {}
    for expert in experts:
        if expert.params is None:
            continue
        for key, tensor in expert.params.items():
            flat[f"expert.{expert.name}.{key}"] = tensor
    save_checkpoint(flat, path)


def load_expert_checkpoint(experts: list, path) -> None:
    """Copy a checkpoint's parameters into matching experts, in place."""
    from .checkpoint import load_checkpoint
    stored = load_checkpoint(path)
    live = {}
    for expert in experts:
        if expert.params is None:
            continue
        for key, tensor in expert.params.items():
            live[f"expert.{expert.name}.{key}"] = tensor
    missing = sorted(set(live) - set(stored))
    extra = sorted(set(stored) - set(live))
    if missing or extra:
        raise ExpertError(
            f"expert checkpoint mismatch: missing {missing[:3]}, "
            f"extra {extra[:3]}")
    for name, tensor in live.items():
        if stored[name].data.shape != tensor.data.shape:
            raise ExpertError(f"{name}: shape {stored[name].data.shape} vs "
                              f"{tensor.data.shape}")
        tensor.data = stored[name].data.copy()


def dump_predictions(experts: list, meshes: list, path, seed: int = 0) -> None:
    """CSV rows: mesh_id, expert, predicted class, then the probabilities."""
    import csv
    num_classes = experts[0].num_classes if experts else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mesh_id", "expert", "class"]
                        + [f"prob{i}" for i in range(num_classes)])
        for mesh in meshes:
            for expert in experts:
                pred = expert.predict(mesh, derive(seed, expert.name, mesh.mesh_id))
                probs = pred.data if pred.ndim == 1 else pred.data.mean(axis=0)
                writer.writerow([mesh.mesh_id, expert.name, int(np.argmax(probs))]
                                + [f"{p:.10g}" for p in probs])
