"""End-to-end community detection and the replication studies.

:func:`run_algorithm1` takes a graph to community labels. :func:`run_experiment`
runs one of the named simulation studies and returns per-replication rows
plus an aggregate summary, optionally written as CSV and JSON.
"""

from __future__ import annotations

import contextlib
import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import orthogonal_procrustes

from .embed import ElbowResult, Embedding, ase, dase, row_normalise, scree_elbows
from .evaluate import (adjusted_rand_index, ks_gaussian_score, mardia_tests,
                       one_way_anova, paired_sign_test)
from .exceptions import UndefinedStatisticError
from .mixture import SelectionResult, select_model, select_reference_model
from .simulate import (clt_spec, resample_adjacency, rho_sweep_spec, sample,
                       sample_table_protocol, section52_spec)
from .spherical import SphericalEmbedding, asymptotic_covariance, transform_embedding

logger = logging.getLogger(__name__)

EXPERIMENTS = ("table1a", "table1b", "fig4", "fig6", "mardia-5.3", "clt-fig2b",
               "appendixB-n", "appendixB-rho")
METHODS = ("xhat", "xtilde", "theta")
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
# rows whose first two coordinates are this small carry no angle information
ANGLE_ATOL = 1e-10


class UsageError(ValueError):
    """Unknown experiment name or invalid experiment parameters."""


@contextlib.contextmanager
def _stage(name):
    try:
        yield
    except Exception as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise


@dataclass(eq=False)
class SideResult:
    """Pipeline output for one embedding (the only one, or one side of a bipartite graph).

    ``m`` is the number of angle columns; the Cartesian embedding has
    ``m + 1`` columns.
    """

    side: str
    m: int
    embedding: Embedding
    spherical: SphericalEmbedding
    selection: SelectionResult
    elbows: Optional[ElbowResult] = None

    @property
    def labels(self) -> np.ndarray:
        return self.selection.labels


def choose_dimension(spectrum, elbow: int = 3) -> tuple:
    """Angle-column count ``m`` from the ``elbow``-th scree elbow.

    Falls back to the last elbow found when fewer are available.
    """
    res = scree_elbows(spectrum, elbow)
    if res.shortfall:
        logger.warning("only %d of %d elbows found; using the last", len(res.elbows), elbow)
    return int(res.elbows[-1]), res


def embed_graph(g, m=None, elbow=3, n_spectrum=25, seed=0):
    """Embedding(s) with ``m + 1`` columns, choosing ``m`` by scree elbow when absent.

    Returns ``(m, elbows, embeddings)`` where ``embeddings`` holds one
    embedding for undirected graphs and the left and right ones otherwise;
    ``elbows`` is None when ``m`` was given.
    """
    k_max = g.n_rows if g.mode == "undirected" else min(g.n_rows, g.n_cols)
    decompose = ase if g.mode == "undirected" else dase
    elbows = None
    with _stage("embed"):
        if m is None:
            k = min(n_spectrum, k_max)
            first = decompose(g, k, seed=seed)
            spectrum = first.spectrum if g.mode == "undirected" else first[0].spectrum
            m, elbows = choose_dimension(spectrum, elbow)
            if m + 1 <= k:
                parts = (first,) if g.mode == "undirected" else first
                return m, elbows, [p.truncate(m + 1) for p in parts]
        if m < 1:
            raise ValueError("m must be >= 1")
        out = decompose(g, m + 1, seed=seed)
    return m, elbows, [out] if g.mode == "undirected" else list(out)


def run_algorithm1(g, m=None, K_star=6, restarts=10, seed=0, elbow=3, n_spectrum=25,
                   max_iter=500, tol=1e-6, n_jobs=1):
    """Spectral clustering of a graph on the spherical coordinates of its embedding.

    Parameters
    ----------
    g : SparseGraph
    m : int, optional
        Number of angle columns; the embedding uses ``m + 1`` dimensions.
        When omitted, ``m`` is the ``elbow``-th scree elbow of the leading
        ``n_spectrum`` eigenvalues (or singular values).
    K_star : int
        Largest number of communities on the grid.
    restarts : int
        EM runs per grid cell.

    Returns
    -------
    SideResult or (SideResult, SideResult)
        One result for undirected graphs; left and right results, clustered
        independently, for directed and bipartite graphs.

    Errors from a stage carry a ``stage`` attribute (``"embed"``,
    ``"transform"`` or ``"select"``).
    """
    if K_star < 1:
        raise ValueError("K_star must be >= 1")
    m, elbows, parts = embed_graph(g, m, elbow, n_spectrum, seed)
    results = []
    for e in parts:
        with _stage("transform"):
            theta = transform_embedding(e, atol=ANGLE_ATOL)
        with _stage("select"):
            sel = select_model(theta, K_star, restarts=restarts, seed=seed, max_iter=max_iter,
                               tol=tol, n_jobs=n_jobs)
        results.append(SideResult(e.side, m, e, theta, sel, elbows))
    return results[0] if g.mode == "undirected" else tuple(results)


# ---------------------------------------------------------------------------
# experiments


@dataclass(eq=False)
class ExperimentReport:
    name: str
    rows: list
    summary: dict
    config: dict = field(default_factory=dict)

    def write(self, out_dir) -> tuple:
        """Write ``<name>.csv`` and ``<name>.json``; returns both paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.name}.csv"
        json_path = out / f"{self.name}.json"
        columns = []
        for row in self.rows:
            columns.extend(k for k in row if k not in columns)
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, restval="")
            writer.writeheader()
            writer.writerows(self.rows)
        with open(json_path, "w") as fh:
            json.dump({"name": self.name, "config": self.config, "summary": self.summary},
                      fh, indent=2, default=_json_default)
        return csv_path, json_path


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _quantiles(values) -> dict:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {}
    return {f"q{int(round(100 * q)):02d}": float(np.quantile(v, q)) for q in QUANTILES}


def _sign_summary(delta) -> dict:
    try:
        rep = paired_sign_test(delta, alternative="greater")
    except UndefinedStatisticError:
        return {"n_positive": 0, "n_nonzero": 0, "p_value": None}
    return {"n_positive": int(rep.statistic), "n_nonzero": rep.n_obs, "p_value": rep.p_value}


def _method_inputs(e: Embedding, m: int):
    """Angles from ``m + 1`` columns and the Cartesian ``m``-column inputs on the same rows."""
    theta = transform_embedding(e.truncate(m + 1), atol=ANGLE_ATOL)
    cart = e.truncate(m)
    xhat = cart.positions[theta.kept]
    xtilde = row_normalise(cart).positions[theta.kept]
    return {"theta": theta.angles, "xhat": xhat, "xtilde": xtilde}, theta.kept


def _cluster_methods(e, z, m, K_star, restarts, seed, methods, true_rank, max_iter, tol):
    inputs, kept = _method_inputs(e, m)
    truth = np.asarray(z)[kept]
    out = {}
    for method in methods:
        fit = select_model if method == "theta" else select_reference_model
        sel = fit(inputs[method], K_star, restarts=restarts, seed=seed, max_iter=max_iter, tol=tol)
        true_d = true_rank - 1 if method == "theta" else true_rank
        out[method] = {"d_hat": sel.d_hat, "K_hat": sel.K_hat, "true_d": true_d,
                       "ari": adjusted_rand_index(sel.labels, truth), "n_effective": int(kept.size)}
    return out


def _method_summary(rows, key_fields):
    groups = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in key_fields), []).append(row)
    out = []
    for key, items in groups.items():
        entry = dict(zip(key_fields, key))
        entry.update({
            "n_rep": len(items),
            "prop_correct_d": float(np.mean([r["d_hat"] == r["true_d"] for r in items])),
            "prop_correct_K": float(np.mean([r["K_hat"] == r["true_K"] for r in items])),
            "mean_ari": float(np.mean([r["ari"] for r in items])),
        })
        out.append(entry)
    return out


def _paired_ari_tests(rows, group_fields, methods):
    """Sign tests of ``ari(theta) - ari(other)``, paired by replication."""
    out = []
    by_group = {}
    for row in rows:
        by_group.setdefault(tuple(row[k] for k in group_fields), {}).setdefault(
            row["method"], {})[row["rep"]] = row["ari"]
    for key, per_method in by_group.items():
        if "theta" not in per_method:
            continue
        for other in methods:
            if other == "theta" or other not in per_method:
                continue
            reps = sorted(set(per_method["theta"]) & set(per_method[other]))
            delta = np.array([per_method["theta"][r] - per_method[other][r] for r in reps])
            entry = dict(zip(group_fields, key))
            entry.update({"comparison": f"theta-{other}", "mean_difference": float(delta.mean()),
                          **_quantiles(delta), **_sign_summary(delta)})
            out.append(entry)
    return out


def _table_rows(which, N, seed, m, K_star, restarts, methods, max_iter, tol, n=None,
                n_prime=None):
    rows = []
    for rep, (spec, g, truth) in enumerate(sample_table_protocol(which, N, seed, n, n_prime)):
        rank = int(np.linalg.matrix_rank(spec.B))
        if g.mode == "undirected":
            sides = [("single", ase(g, m + 1, seed=seed), truth.z, spec.K)]
        else:
            left, right = dase(g, m + 1, seed=seed)
            sides = [("left", left, truth.z, spec.K), ("right", right, truth.z_prime, spec.K_prime)]
        for side, e, z, K in sides:
            res = _cluster_methods(e, z, m, K_star, restarts, seed, methods, rank, max_iter, tol)
            for method, r in res.items():
                rows.append({"protocol": which, "n": g.n_rows, "rep": rep, "side": side,
                             "method": method, "true_K": K, **r})
        logger.info("%s replication %d/%d done", which, rep + 1, N)
    return rows


def _exp_table1a(N, seed, m=10, K_star=6, restarts=1, methods=METHODS, K_values=(2, 3),
                 n=1000, max_iter=500, tol=1e-6):
    rows = []
    for K in K_values:
        rows += _table_rows(f"table1a-K{K}", N, seed, m, K_star, restarts, methods, max_iter,
                            tol, n=n)
    summary = {"methods": _method_summary(rows, ("true_K", "method")),
               "sign_tests": _paired_ari_tests(rows, ("true_K",), methods)}
    return rows, summary


def _exp_table1b(N, seed, m=10, K_star=6, restarts=1, methods=METHODS, n=1000, n_prime=1500,
                 max_iter=500, tol=1e-6):
    rows = _table_rows("table1b", N, seed, m, K_star, restarts, methods, max_iter, tol,
                       n=n, n_prime=n_prime)
    summary = {"methods": _method_summary(rows, ("side", "method")),
               "sign_tests": _paired_ari_tests(rows, ("side",), methods)}
    return rows, summary


def _exp_fig6(N, seed, m=10, K_star=6, restarts=1, methods=METHODS,
              n_values=(100, 200, 500, 1000, 2000), max_iter=500, tol=1e-6):
    rows = []
    for n in n_values:
        rows += _table_rows("table1a-K2", N, seed, m, K_star, restarts, methods, max_iter, tol,
                            n=n)
    summary = {"methods": _method_summary(rows, ("n", "method")),
               "ari_differences": _paired_ari_tests(rows, ("n",), methods)}
    return rows, summary


def community_moments(theta, z, K):
    """Per-community mean vector and ``1/n_k`` covariance of the rows of ``theta``."""
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z)
    means, covs = [], []
    for k in range(K):
        block = theta[z == k]
        means.append(block.mean(axis=0))
        covs.append(np.atleast_2d(np.cov(block, rowvar=False, bias=True)))
    return np.array(means), np.array(covs)


def _moment_rows(theta, z, K, d, tag):
    means, covs = community_moments(theta, z, K)
    cols = theta.shape[1]
    rows = []
    for k in range(K):
        for a in range(cols):
            rows.append({**tag, "community": k + 1, "quantity": "mean", "i": a + 1, "j": a + 1,
                         "value": float(means[k, a])})
            for b in range(a, cols):
                rows.append({**tag, "community": k + 1, "quantity": "cov", "i": a + 1,
                             "j": b + 1, "value": float(covs[k, a, b])})
        for a in range(d, cols):
            rows.append({**tag, "community": k + 1, "quantity": "ks", "i": a + 1, "j": a + 1,
                         "value": ks_gaussian_score(theta[z == k, a])})
    for a in range(d, cols):
        rows.append({**tag, "community": 0, "quantity": "ks", "i": a + 1, "j": a + 1,
                     "value": ks_gaussian_score(theta[:, a])})
    return rows


def _label_angles(spec, g, truth, m, seed):
    theta = transform_embedding(ase(g, m + 1, seed=seed), atol=ANGLE_ATOL)
    return theta.angles, truth.z[theta.kept]


def _moment_summary(rows, d, group=()):
    """Quantiles per (group, quantity, community, i, j) and the noise-block checks."""
    cells = {}
    for r in rows:
        cells.setdefault(tuple(r[k] for k in group) + (r["quantity"], r["community"], r["i"],
                                                         r["j"]), []).append(r["value"])
    boxes = []
    for key, vals in cells.items():
        entry = dict(zip(group + ("quantity", "community", "i", "j"), key))
        entry.update(_quantiles(vals))
        boxes.append(entry)
    checks = {}
    for gkey in sorted({tuple(r[k] for k in group) for r in rows}):
        sel = [r for r in rows if tuple(r[k] for k in group) == gkey]
        noise_means = [float(np.median(v)) for key, v in cells.items()
                       if key[:len(group)] == gkey and key[len(group)] == "mean"
                       and key[-1] > d]
        cross = {}
        variances = {}
        for r in sel:
            if r["quantity"] == "cov" and r["i"] <= d < r["j"]:
                cross.setdefault((r["i"], r["j"]), []).append(r["value"])
            if r["quantity"] == "cov" and r["i"] == r["j"] > d:
                variances.setdefault(r["i"], {}).setdefault(r["community"], []).append(r["value"])
        anova = {}
        for col, groups in sorted(variances.items()):
            samples = [groups[k] for k in sorted(groups)]
            if len(samples) > 1 and min(len(s) for s in samples) > 1:
                anova[col] = one_way_anova(samples).p_value
        checks["/".join(map(str, gkey)) or "all"] = {
            "noise_mean_median_max_abs_dev_from_pi":
                float(max(abs(v - np.pi) for v in noise_means)) if noise_means else None,
            "cross_cov_median_abs": float(np.median(np.abs(np.concatenate(
                [np.asarray(v) for v in cross.values()])))) if cross else None,
            "noise_variance_anova_p": anova,
        }
    return {"boxplots": boxes, "checks": checks}


def _exp_fig4(N, seed, m=10, d=2, n=2000):
    spec = section52_spec(n)
    rows = []
    for rep, child in enumerate(np.random.SeedSequence(seed).spawn(N)):
        g, truth = sample(spec, seed=np.random.default_rng(child))
        theta, z = _label_angles(spec, g, truth, m, seed)
        rows += _moment_rows(theta, z, spec.K, d, {"rep": rep})
    return rows, _moment_summary(rows, d)


def _exp_appendix_n(N, seed, m=10, d=2, n_values=(100, 200, 500, 1000, 2000)):
    rows = []
    for n in n_values:
        spec = section52_spec(n)
        for rep, child in enumerate(np.random.SeedSequence([seed, n]).spawn(N)):
            g, truth = sample(spec, seed=np.random.default_rng(child))
            theta, z = _label_angles(spec, g, truth, m, seed)
            rows += _moment_rows(theta, z, spec.K, d, {"n": n, "rep": rep})
    return rows, _moment_summary(rows, d, group=("n",))


def _exp_appendix_rho(N, seed, m=10, n=500, r_values=(0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35)):
    rows = []
    d = 1
    for r in r_values:
        spec = rho_sweep_spec(r, n)
        for rep, child in enumerate(np.random.SeedSequence([seed, int(round(1000 * r))]).spawn(N)):
            g, truth = sample(spec, seed=np.random.default_rng(child))
            theta, z = _label_angles(spec, g, truth, m, seed)
            rows += _moment_rows(theta, z, spec.K, d, {"r": float(r), "rep": rep})
    return rows, _moment_summary(rows, d, group=("r",))


def mardia_pvalues(g, z, K, seed=0, d_theta=2, d_xtilde=3):
    """Per-community Mardia p-values on ``theta[:, :d_theta]`` and ``xtilde[:, :d_xtilde]``."""
    e = ase(g, max(d_theta + 1, d_xtilde), seed=seed)
    theta = transform_embedding(e.truncate(d_theta + 1), atol=ANGLE_ATOL)
    xt = row_normalise(e.truncate(d_xtilde)).positions[theta.kept]
    zk = np.asarray(z)[theta.kept]
    out = []
    for k in range(K):
        rows = zk == k
        ts, tk = mardia_tests(theta.angles[rows, :d_theta])
        xs, xk = mardia_tests(xt[rows])
        out.append({"community": k + 1, "theta_pS": ts.p_value, "theta_pK": tk.p_value,
                    "xtilde_pS": xs.p_value, "xtilde_pK": xk.p_value,
                    "theta_log_pS": ts.log_p_value, "theta_log_pK": tk.log_p_value,
                    "xtilde_log_pS": xs.log_p_value, "xtilde_log_pK": xk.log_p_value,
                    "theta_TS": ts.statistic, "theta_TK": tk.statistic,
                    "xtilde_TS": xs.statistic, "xtilde_TK": xk.statistic})
    return out


def _exp_mardia(N, seed, n=2000):
    spec = section52_spec(n)
    rows = []
    for rep, child in enumerate(np.random.SeedSequence(seed).spawn(N)):
        g, truth = sample(spec, seed=np.random.default_rng(child))
        for r in mardia_pvalues(g, truth.z, spec.K, seed=seed):
            rows.append({"rep": rep, **r})
    summary = {}
    for stat in ("pS", "pK"):
        # log p keeps the sign of the paired difference where both p underflow to 0
        delta = np.array([r[f"theta_log_{stat}"] - r[f"xtilde_log_{stat}"] for r in rows])
        summary[stat] = {"sign_test": _sign_summary(delta),
                         "theta_log_p": _quantiles([r[f"theta_log_{stat}"] for r in rows]),
                         "xtilde_log_p": _quantiles([r[f"xtilde_log_{stat}"] for r in rows])}
    return rows, summary


def clt_node_estimates(N, seed, n=1000, node=0):
    """Node estimates from repeated adjacency draws with the latent positions held fixed.

    Every ASE is aligned to the true positions by orthogonal Procrustes
    before the node's row is read off. Returns ``(estimates, x_true,
    spec, truth)``.
    """
    spec = clt_spec(n)
    root = np.random.SeedSequence(seed)
    first, *children = root.spawn(N + 1)
    _, truth = sample(spec, seed=np.random.default_rng(first))
    X = truth.rho[:, None] * spec.mu[truth.z]
    est = np.empty((N, spec.mu.shape[1]))
    for r, child in enumerate(children):
        g = resample_adjacency(spec.B, truth.z, truth.rho, seed=np.random.default_rng(child))
        Xhat = ase(g, spec.mu.shape[1], seed=seed).positions
        W, _ = orthogonal_procrustes(Xhat, X)
        est[r] = Xhat[node] @ W
    return est, X[node], spec, truth


def _exp_clt(N, seed, n=1000, node=0):
    est, x, spec, truth = clt_node_estimates(N, seed, n, node)
    k = int(truth.z[node])
    psi = np.bincount(truth.z, minlength=spec.K) / n
    sigma = asymptotic_covariance(spec.mu, psi, spec.rho_law, k, float(truth.rho[node])).sigma / n
    # one replication has no spread to estimate
    emp = np.cov(est, rowvar=False) if len(est) > 1 else np.full((2, 2), np.nan)
    angles_true = np.arctan2(x[0], x[1]) % (2 * np.pi)
    angles_est = np.arctan2(est[:, 0], est[:, 1]) % (2 * np.pi)
    # the no-wrap assumption fails when an estimate falls across theta = 0
    wrapped = np.abs(angles_est - angles_true) > np.pi
    rows = [{"rep": r, "x1": float(e[0]), "x2": float(e[1])} for r, e in enumerate(est)]
    summary = {
        "node": node, "community": k + 1, "rho": float(truth.rho[node]),
        "x_true": x.tolist(), "empirical_mean": est.mean(axis=0).tolist(),
        "empirical_cov": emp.tolist(), "theoretical_cov": sigma.tolist(),
        "relative_frobenius_error": float(np.linalg.norm(emp - sigma) / np.linalg.norm(sigma)),
        "wrap_fraction": float(wrapped.mean()),
    }
    return rows, summary


_RUNNERS = {
    "table1a": _exp_table1a,
    "table1b": _exp_table1b,
    "fig4": _exp_fig4,
    "fig6": _exp_fig6,
    "mardia-5.3": _exp_mardia,
    "clt-fig2b": _exp_clt,
    "appendixB-n": _exp_appendix_n,
    "appendixB-rho": _exp_appendix_rho,
}


def run_experiment(name: str, N: int, seed=0, out_dir=None, **params) -> ExperimentReport:
    """Run a named replication study.

    Parameters
    ----------
    name : str
        One of :data:`EXPERIMENTS`.
    N : int
        Replications (per setting, for the sweeps).
    seed : int
    out_dir : path, optional
        When given, ``<name>.csv`` (one row per replication and quantity)
        and ``<name>.json`` (summary) are written there.
    **params
        Study-specific overrides such as ``m``, ``K_star``, ``restarts``,
        ``methods``, ``n`` or ``n_values``.

    Raises
    ------
    UsageError
        Unknown ``name``, ``N < 1`` or an unsupported parameter.
    """
    if name not in _RUNNERS:
        raise UsageError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    if int(N) < 1:
        raise UsageError("N must be >= 1")
    runner = _RUNNERS[name]
    allowed = set(runner.__code__.co_varnames[2:runner.__code__.co_argcount])
    unknown = set(params) - allowed
    if unknown:
        raise UsageError(f"{name} does not accept {sorted(unknown)}; allowed: {sorted(allowed)}")
    rows, summary = runner(int(N), seed, **params)
    config = {"N": int(N), "seed": seed,
              **{k: list(v) if isinstance(v, tuple) else v for k, v in params.items()}}
    report = ExperimentReport(name, rows, summary, config)
    if out_dir is not None:
        report.write(out_dir)
    return report
