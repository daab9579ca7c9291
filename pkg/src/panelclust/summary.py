"""Posterior summaries: point-estimate partition, agreement metrics, reports.

The point estimate is the visited sample whose co-clustering (association)
matrix is closest in squared loss to the posterior mean co-clustering
matrix, so the reported cluster parameters always coexist with the reported
partition. Partition agreement uses the fraction of location pairs on which
two partitions agree (co-clustered in both or separated in both).
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .likelihood import ClusterParams
from .partition import Partition


def coclustering_matrix(samples: Sequence[Partition]) -> np.ndarray:
    """Mean association matrix: entry (i, j) is the fraction of samples
    co-clustering i and j. Symmetric with unit diagonal."""
    if not samples:
        raise ValidationError("need at least one sample")
    n = samples[0].n
    labels = np.empty((len(samples), n), dtype=int)
    for k, part in enumerate(samples):
        if part.n != n:
            raise ValidationError("samples have inconsistent sizes")
        labels[k] = part.labels
    assoc = labels[:, :, None] == labels[:, None, :]
    return assoc.mean(axis=0)


def dahl_estimate(samples: Sequence[Partition]) -> tuple[Partition, int]:
    """Least-squares partition among the visited samples.

    Returns the chosen partition and its sample index; ties break toward the
    earliest index.
    """
    pi_hat = coclustering_matrix(samples)
    n = samples[0].n
    best_idx, best_loss = 0, np.inf
    for k, part in enumerate(samples):
        lab = np.asarray(part.labels)
        assoc = lab[:, None] == lab[None, :]
        loss = float(((assoc - pi_hat) ** 2).sum())
        if loss < best_loss - 1e-12:
            best_idx, best_loss = k, loss
    return samples[best_idx], best_idx


def rand_index(a: Partition, b: Partition) -> float:
    """Fraction of pairs on which the two partitions agree, in [0, 1]."""
    if a.n != b.n:
        raise ValidationError(f"partition sizes differ: {a.n} vs {b.n}")
    n = a.n
    if n < 2:
        return 1.0
    la = np.asarray(a.labels)
    lb = np.asarray(b.labels)
    contingency = np.zeros((a.n_clusters, b.n_clusters), dtype=np.int64)
    np.add.at(contingency, (la, lb), 1)
    sum_sq = float((contingency.astype(float) ** 2).sum())
    sum_a = float((contingency.sum(axis=1).astype(float) ** 2).sum())
    sum_b = float((contingency.sum(axis=0).astype(float) ** 2).sum())
    pairs = n * (n - 1) / 2.0
    # agreements = co-clustered in both + separated in both
    agree = pairs + sum_sq - 0.5 * (sum_a + sum_b)
    return float(agree / pairs)


def stability_score(reference: Partition,
                    replicate_partitions: Sequence[Partition]) -> float:
    """Mean pairwise agreement between a reference and replicate partitions."""
    if not replicate_partitions:
        raise ValidationError("need at least one replicate")
    return float(np.mean([rand_index(reference, r) for r in replicate_partitions]))


def summarize_params(partition: Partition, params: dict[int, ClusterParams],
                     labels: Optional[Sequence[str]] = None) -> dict:
    """Cluster-wise report keyed by canonical cluster id."""
    if set(params) != set(range(partition.n_clusters)):
        raise ValidationError("params keys do not match the partition's clusters")
    clusters = []
    for cid, block in enumerate(partition.blocks):
        prm = params[cid]
        members = sorted(block)
        row = {
            "id": cid,
            "members": members,
            "beta": [float(v) for v in prm.beta],
            "sigma2": float(prm.sigma2),
            "alpha": float(prm.alpha),
            "ell": float(prm.ell),
        }
        if labels is not None:
            row["labels"] = [str(labels[i]) for i in members]
        clusters.append(row)
    return {"assignment": [int(v) for v in partition.labels],
            "n_clusters": partition.n_clusters,
            "clusters": clusters}


def params_table_csv(report: dict, path) -> None:
    """CSV mirror of the cluster-wise report."""
    rows = report["clusters"]
    p = len(rows[0]["beta"]) if rows else 0
    header = (["cluster", "n_members", "members"]
              + [f"beta_{j}" for j in range(p)] + ["sigma2", "ell", "alpha"])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [str(row["id"]), str(len(row["members"])),
                     ";".join(str(m) for m in row["members"])]
            cells += [repr(v) for v in row["beta"]]
            cells += [repr(row["sigma2"]), repr(row["ell"]), repr(row["alpha"])]
            fh.write(",".join(cells) + "\n")
