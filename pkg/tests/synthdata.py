"""Seeded multi-label data with learnable structure, written as ARFF."""

from __future__ import annotations

import numpy as np


def make_multilabel(n: int, dim: int, k: int, seed: int, noise: float = 0.3):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(dim, k))
    X = rng.normal(size=(n, dim))
    scores = X @ W / np.sqrt(dim) + noise * rng.normal(size=(n, k))
    Y = scores > np.quantile(scores, 0.65, axis=0)
    return X, Y


def write_arff(path, X, Y, sparse: bool = False) -> None:
    dim, k = X.shape[1], Y.shape[1]
    lines = ["@relation synthetic", ""]
    lines += [f"@attribute f{j} numeric" for j in range(dim)]
    lines += [f"@attribute lab{j} {{0,1}}" for j in range(k)]
    lines += ["", "@data"]
    for x, y in zip(X, Y):
        values = [repr(float(v)) for v in x] + [str(int(b)) for b in y]
        if sparse:
            lines.append("{" + ", ".join(f"{j} {v}" for j, v in enumerate(values) if float(v) != 0.0) + "}")
        else:
            lines.append(",".join(values))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_split(tmpdir, n_train=300, n_test=200, dim=20, k=6, seed=0):
    X, Y = make_multilabel(n_train + n_test, dim, k, seed)
    train, test = tmpdir / "train.arff", tmpdir / "test.arff"
    write_arff(train, X[:n_train], Y[:n_train])
    write_arff(test, X[n_train:], Y[n_train:])
    return train, test
