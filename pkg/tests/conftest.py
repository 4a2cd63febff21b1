import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flowxai.data import Dataset
from flowxai.network import DenseLayer, DenseNetwork


def random_network(rng, input_dim=None, num_layers=None, max_width=16):
    """Random ReLU net with a linear logit head, for property tests."""
    d = input_dim or int(rng.integers(2, 9))
    n_layers = num_layers or int(rng.integers(2, 5))
    sizes = [d] + [int(rng.integers(2, max_width + 1)) for _ in range(n_layers - 1)]
    sizes.append(int(rng.integers(2, 6)))  # classes
    layers = []
    for i, (fi, fo) in enumerate(zip(sizes, sizes[1:])):
        limit = np.sqrt(6.0 / (fi + fo))
        w = rng.uniform(-limit, limit, size=(fo, fi))
        b = rng.uniform(-0.1, 0.1, size=fo)
        act = "linear" if i == len(sizes) - 2 else "relu"
        layers.append(DenseLayer(w, b, act))
    return DenseNetwork(layers, [f"x{i}" for i in range(d)])


def threshold_model(d=4, feature=0, cutoff=0.5, scale=8.0):
    """Hand-built 2-class model predicting 1 iff x[feature] > cutoff."""
    w = np.zeros((2, d))
    w[1, feature] = scale
    b = np.array([0.0, -scale * cutoff])
    return DenseNetwork([DenseLayer(w, b, "linear")], [f"x{i}" for i in range(d)])


def make_dataset(features, labels, class_names=None, names=None):
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    if class_names is None:
        class_names = [f"c{i}" for i in range(int(labels.max()) + 1)]
    if names is None:
        names = [f"x{i}" for i in range(features.shape[1])]
    return Dataset(features=features, labels=labels, feature_names=names, class_names=class_names)


NSL_COLUMNS = [
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes",
    "land", "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in",
    "num_compromised", "root_shell", "su_attempted", "num_root", "num_file_creations",
    "num_shells", "num_access_files", "num_outbound_cmds", "is_host_login",
    "is_guest_login", "count", "srv_count", "serror_rate", "srv_serror_rate",
    "rerror_rate", "srv_rerror_rate", "same_srv_rate", "diff_srv_rate",
    "srv_diff_host_rate", "dst_host_count", "dst_host_srv_count",
    "dst_host_same_srv_rate", "dst_host_diff_srv_rate", "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate", "dst_host_serror_rate", "dst_host_srv_serror_rate",
    "dst_host_rerror_rate", "dst_host_srv_rerror_rate",
]

_NSL_SUBLABELS = {
    "normal": ["normal"],
    "DoS": ["neptune", "smurf", "back"],
    "Probe": ["portsweep", "satan", "ipsweep"],
    "R2L": ["guess_passwd", "warezclient"],
    "U2R": ["buffer_overflow", "rootkit"],
}


def make_nslkdd_like_csv(path, n, seed, class_mix=None):
    """Synthetic CSV with the NSL-KDD column layout and label vocabulary.

    Numerics are class-correlated so a classifier has something to learn;
    the flag column skews toward S0 for DoS rows, mirroring the real data.
    """
    rng = np.random.default_rng(seed)
    class_mix = class_mix or {"normal": 0.45, "DoS": 0.3, "Probe": 0.12, "R2L": 0.08, "U2R": 0.05}
    classes = list(class_mix)
    probs = np.array([class_mix[c] for c in classes])
    probs = probs / probs.sum()
    protocols = ["tcp", "udp", "icmp"]
    services = ["http", "private", "ftp", "smtp", "domain_u"]
    flags = ["SF", "S0", "REJ", "RSTR"]

    with open(path, "w") as fh:
        fh.write(",".join(NSL_COLUMNS + ["label"]) + "\n")
        for _ in range(n):
            cls = classes[rng.choice(len(classes), p=probs)]
            sub = _NSL_SUBLABELS[cls][rng.integers(len(_NSL_SUBLABELS[cls]))]
            row = {c: f"{rng.uniform(0, 1):.4f}" for c in NSL_COLUMNS}
            row["protocol_type"] = protocols[rng.integers(3)]
            row["service"] = services[rng.integers(5)]
            if cls == "DoS":
                row["flag"] = "S0" if rng.uniform() < 0.8 else "SF"
                row["serror_rate"] = f"{rng.uniform(0.7, 1.0):.4f}"
                row["count"] = str(int(rng.integers(200, 511)))
                row["src_bytes"] = str(int(rng.integers(0, 10)))
            else:
                row["flag"] = flags[rng.integers(4)]
                row["serror_rate"] = f"{rng.uniform(0.0, 0.3):.4f}"
                row["count"] = str(int(rng.integers(1, 50)))
                row["src_bytes"] = str(int(rng.integers(100, 5000)))
            if cls == "Probe":
                row["diff_srv_rate"] = f"{rng.uniform(0.6, 1.0):.4f}"
            if cls == "R2L":
                row["num_failed_logins"] = str(int(rng.integers(1, 6)))
            if cls == "U2R":
                row["root_shell"] = "1"
                row["num_root"] = str(int(rng.integers(1, 9)))
            row["duration"] = str(int(rng.integers(0, 1000)))
            row["dst_bytes"] = str(int(rng.integers(0, 5000)))
            fh.write(",".join(row[c] for c in NSL_COLUMNS) + f",{sub}\n")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
