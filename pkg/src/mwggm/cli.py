"""Command-line entry point: ``mwggm <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure (a ``diagnostic.txt`` is written to the output directory).
"""
from __future__ import annotations

import argparse
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import diagnostics
from . import gwishart as gw
from . import dynamic as dl
from . import io
from . import multiway as mw
from . import spatiotemporal as st
from .config import ConfigError, RunConfig, as_dict, parse_config, read_config
from .graph import GraphPrior, format_edge_list, lattice_adjacency, UndirectedGraph
from .io import DataError, fmt
from .tensor import tucker_product, write_array

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
RNG_NAME = "numpy.random.Philox (4x64, seed XOR chain index)"


class NumericalError(RuntimeError):
    pass


def chain_seed(seed: int, chain: int) -> int:
    return seed ^ chain


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(chain_seed(seed, chain)))


def map_chains(fn: Callable, args: Sequence, threads: int) -> list:
    """Run ``fn`` over per-chain arguments; results come back in chain order."""
    if threads > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(args))) as pool:
            return list(pool.map(fn, args))
    return [fn(a) for a in args]


def recorded_iterations(cfg: RunConfig, n: int) -> np.ndarray:
    return cfg.burn + 1 + cfg.thin * np.arange(n)


def _graph_prior(cfg: RunConfig) -> GraphPrior:
    return GraphPrior(cfg.graph_prior, cfg.edge_penalty)


def _chain_config(cfg: RunConfig, chain: int) -> mw.ChainConfig:
    return mw.ChainConfig(iters=cfg.iters, burn=cfg.burn, thin=cfg.thin, seed=chain_seed(cfg.seed, chain),
                          sigma_g=cfg.sigma_g, n_mc=cfg.n_mc, adapt=cfg.adapt, rj_moves=cfg.rj_moves)


def _ess_table(chain_traces: Sequence[dict[str, np.ndarray]]) -> dict[str, float]:
    out: dict[str, float] = {}
    for traces in chain_traces:
        for name, x in traces.items():
            out[name] = out.get(name, 0.0) + (diagnostics.ess(x) if len(x) else 0.0)
    return out


def _base_summary(cfg: RunConfig, n_samples: Sequence[int]) -> dict:
    warnings = []
    if not any(n_samples):
        warnings.append("no samples recorded")
    return {
        "command": cfg.command,
        "rng": RNG_NAME,
        "seed": cfg.seed,
        "seeds": [chain_seed(cfg.seed, c) for c in range(cfg.chains)],
        "chains": cfg.chains,
        "n_samples": list(n_samples),
        "empty": not any(n_samples),
        "warnings": warnings,
    }


def _write_multiway_outputs(out: Path, cfg: RunConfig, results: Sequence[mw.PosteriorSummary],
                            summary: dict) -> None:
    L = len(results[0].edge_probs)
    for l in range(L):
        probs = np.mean([r.edge_probs[l] for r in results], axis=0)
        io.write_matrix_csv(out / f"edges_{l + 1}.csv", probs)
        K_mean = np.mean([r.K_mean[l] for r in results], axis=0)
        io.write_matrix_csv(out / f"K_mean_{l + 1}.csv", K_mean)
    traces = [r.traces() for r in results]
    io.write_traces(out, [(recorded_iterations(cfg, r.n_samples), t) for r, t in zip(results, traces)])
    summary["acceptance"] = [r.acceptance for r in results]
    summary["step_sd"] = [r.step_sd for r in results]
    summary["ess"] = _ess_table(traces)


# -- fit-multiway ---------------------------------------------------------------------

def _multiway_chain(args) -> mw.PosteriorSummary:
    cfg, data, chain = args
    shape = data.shape[:-1]
    init = mw.init_state(shape, cfg.delta, graph_prior=_graph_prior(cfg), step_sd=cfg.step_sd)
    res = mw.run_chain(data, init, _chain_config(cfg, chain), chain_rng(cfg.seed, chain),
                       gw.LogNormalizerCache(cfg.n_mc, cfg.seed))
    res.extra.pop("final_state", None)
    return res


def load_multiway_data(path: str, L: int) -> np.ndarray:
    data = io.load_array(path)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite values")
    if data.ndim == L:
        data = data[..., None]
    elif data.ndim != L + 1:
        raise DataError(f"{path}: array has {data.ndim} dimensions, expected {L} or {L + 1}")
    return data


def cmd_fit_multiway(cfg: RunConfig, out: Path) -> dict:
    if cfg.data is None or cfg.dims is None:
        raise ConfigError("fit-multiway needs --data and --dims")
    data = load_multiway_data(cfg.data, cfg.dims)
    results = _run_numerical(lambda: map_chains(_multiway_chain, [(cfg, data, c) for c in range(cfg.chains)],
                                                cfg.threads))
    summary = _base_summary(cfg, [r.n_samples for r in results])
    summary["dims"] = list(data.shape[:-1])
    summary["n"] = int(data.shape[-1])
    _write_multiway_outputs(out, cfg, results, summary)
    return summary


# -- fit-surveillance ----------------------------------------------------------------------

def _surveillance_config(cfg: RunConfig, chain: int) -> st.SurveillanceConfig:
    return st.SurveillanceConfig(iters=cfg.iters, burn=cfg.burn, thin=cfg.thin, seed=chain_seed(cfg.seed, chain),
                                 sigma_g=cfg.sigma_g, theta_sd=cfg.theta_sd, step_sd=cfg.step_sd,
                                 n_mc=cfg.n_mc, rho_n_mc=cfg.rho_n_mc, delta=cfg.delta, adapt=cfg.adapt)


def _surveillance_chain(args) -> st.SurveillanceSummary:
    cfg, data, chain = args
    model = st.SurveillanceModel(data, cfg.delta, n_mc=cfg.n_mc, rho_n_mc=cfg.rho_n_mc, seed=cfg.seed,
                                 cancer_prior=_graph_prior(cfg))
    return st.fit_surveillance(data, _surveillance_config(cfg, chain), chain_rng(cfg.seed, chain), model)


def cmd_fit_surveillance(cfg: RunConfig, out: Path) -> dict:
    if cfg.counts is None or cfg.adjacency is None:
        raise ConfigError("fit-surveillance needs --counts and --adjacency")
    data = io.load_surveillance(cfg.counts, cfg.adjacency)
    if data.shape[2] <= 4:
        raise DataError("need more than 4 years for the autoregressive graph family")
    results = _run_numerical(lambda: map_chains(_surveillance_chain, [(cfg, data, c) for c in range(cfg.chains)],
                                                cfg.threads))
    ns = [r.n_samples for r in results]
    summary = _base_summary(cfg, ns)
    total = sum(ns)
    mC, mS, mT = data.shape
    if total:
        w = np.array(ns, dtype=float) / total
        mean = sum(wi * r.risk_mean for wi, r in zip(w, results) if wi > 0)
        second = sum(wi * (r.risk_sd ** 2 + r.risk_mean ** 2) for wi, r in zip(w, results) if wi > 0)
        sd = np.sqrt(np.maximum(second - mean ** 2, 0.0))
        edges = sum(wi * r.cancer_edge_probs for wi, r in zip(w, results))
        rho_post = sum(wi * r.rho_posterior for wi, r in zip(w, results))
        q_post = sum(wi * r.ar_order_posterior for wi, r in zip(w, results))
        rho_all = np.concatenate([r.rho_samples for r in results])
        summary["rho_median"] = float(np.quantile(rho_all, 0.5, method="inverted_cdf"))
        summary["modal_ar_order"] = int(st.AR_ORDERS[int(np.argmax(q_post))])
        rows = [(c + 1, s + 1, t + 1, float(mean[c, s, t]), float(sd[c, s, t]))
                for c in range(mC) for s in range(mS) for t in range(mT)]
    else:
        edges = np.zeros((mC, mC))
        rho_post = np.zeros(len(st.RHO_GRID))
        q_post = np.zeros(len(st.AR_ORDERS))
        rows = []
    io.write_table_csv(out / "risk_surface.csv", ["cancer", "area", "year", "mean", "sd"], rows)
    io.write_matrix_csv(out / "cancer_edges.csv", edges)
    io.write_table_csv(out / "rho_posterior.csv", ["rho", "probability"],
                       [(float(r), float(p)) for r, p in zip(st.RHO_GRID, rho_post)] if total else [])
    io.write_table_csv(out / "ar_order_posterior.csv", ["order", "probability"],
                       [(q, float(p)) for q, p in zip(st.AR_ORDERS, q_post)] if total else [])
    io.write_traces(out, [(recorded_iterations(cfg, r.n_samples), r.traces) for r in results])
    summary["dims"] = [mC, mS, mT]
    summary["acceptance"] = [r.acceptance for r in results]
    summary["ess"] = _ess_table([r.traces for r in results])
    return summary


# -- fit-dlm --------------------------------------------------------------------------

DLM_KEYS = ("F", "H", "W", "beta", "v", "C0", "M0")


def parse_dlm_spec(text: str, dims: tuple[int, ...], T: int, default_beta: float = 0.95) -> dl.DLMSpec:
    """Time-invariant DLM settings: ``F`` (``s`` values), ``H``, ``W``, ``C0`` (``s*s``
    values, row-major), ``beta``, ``v`` and ``M0`` (a constant fill value)."""
    vals: dict[str, list[float]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, raw = stripped.partition("=")
        key = key.strip()
        if not sep or not raw.strip():
            raise ConfigError(f"spec line {lineno}: expected 'key = values'")
        if key not in DLM_KEYS:
            raise ConfigError(f"spec line {lineno}: unknown key {key!r}")
        if key in vals:
            raise ConfigError(f"spec line {lineno}: duplicate key {key!r}")
        try:
            vals[key] = [float(tok) for tok in raw.split()]
        except ValueError:
            raise ConfigError(f"spec line {lineno}: values for {key} must be numbers") from None
    if "F" not in vals:
        raise ConfigError("spec needs F")
    F = np.array(vals["F"])
    s = F.size

    def square(key: str, default: np.ndarray) -> np.ndarray:
        if key not in vals:
            return default
        if len(vals[key]) != s * s:
            raise ConfigError(f"spec: {key} needs {s * s} values")
        return np.array(vals[key]).reshape(s, s)

    for key in ("beta", "v", "M0"):
        if key in vals and len(vals[key]) != 1:
            raise ConfigError(f"spec: {key} takes a single value")
    H = square("H", np.eye(s))
    C0 = square("C0", np.eye(s))
    W = square("W", None) if "W" in vals else None  # type: ignore[arg-type]
    beta = vals.get("beta", [default_beta])[0]
    v = vals.get("v", [1.0])[0]
    M0 = np.full(tuple(dims) + (s,), vals.get("M0", [0.0])[0])
    try:
        return dl.DLMSpec(F=np.tile(F, (T, 1)), H=H, M0=M0, C0=C0,
                          W=None if W is None else np.broadcast_to(W, (T, s, s)).copy(),
                          v=np.full(T, v), beta=beta)
    except ValueError as exc:
        raise ConfigError(f"spec: {exc}") from exc


def _dlm_chain(args):
    cfg, Ys, spec, chain = args
    init = mw.init_state(spec.dims, cfg.delta, graph_prior=_graph_prior(cfg), step_sd=cfg.step_sd)
    res = dl.dlm_mcmc(Ys, spec, init, _chain_config(cfg, chain), chain_rng(cfg.seed, chain))
    res.extra.pop("final_state", None)
    return res


def _write_states(path: Path, states: Sequence[np.ndarray]) -> None:
    shape = states[0].shape
    header = ["time"] + [f"i{k + 1}" for k in range(len(shape) - 1)] + ["state", "mean"]
    rows = []
    for t, X in enumerate(states):
        for idx in np.ndindex(*shape[::-1]):
            idx = idx[::-1]
            rows.append((t, *[i + 1 for i in idx], float(X[idx])))
    io.write_table_csv(path, header, rows)


def cmd_fit_dlm(cfg: RunConfig, out: Path, series: Sequence[str]) -> dict:
    if not series or cfg.spec is None:
        raise ConfigError("fit-dlm needs --series and --spec")
    Ys = [io.load_array(p) for p in series]
    dims = Ys[0].shape
    for p, Y in zip(series, Ys):
        if Y.shape != dims:
            raise DataError(f"{p}: dims {Y.shape} differ from {dims}")
        if not np.all(np.isfinite(Y)):
            raise DataError(f"{p}: non-finite values")
    try:
        spec_text = Path(cfg.spec).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read spec {cfg.spec}: {exc.strerror}") from exc
    spec = parse_dlm_spec(spec_text, dims, len(Ys), cfg.beta)
    results = _run_numerical(lambda: map_chains(_dlm_chain, [(cfg, Ys, spec, c) for c in range(cfg.chains)],
                                                cfg.threads))
    summary = _base_summary(cfg, [r.n_samples for r in results])
    summary["dims"] = list(dims)
    summary["T"] = len(Ys)
    _write_multiway_outputs(out, cfg, results, summary)
    _write_states(out / "filtered_states.csv", results[0].extra["filtered_mean"])
    smoothed = [np.mean([r.extra["smoothed_mean"][t] for r in results], axis=0) for t in range(len(Ys) + 1)]
    _write_states(out / "smoothed_states.csv", smoothed)
    covs = results[0].extra["filtered_cov"]
    io.write_table_csv(out / "filtered_cov.csv", ["time", "i", "j", "value"],
                       [(t, i + 1, j + 1, float(C[i, j])) for t, C in enumerate(covs)
                        for i in range(C.shape[0]) for j in range(C.shape[1])])
    return summary


# -- simulate ---------------------------------------------------------------------------

AR_COEFS = {1: (0.6,), 2: (0.3, 0.5), 3: (0.3, 0.2, 0.3), 4: (0.2, 0.2, 0.2, 0.2)}


def _ints(text: str | None, key: str) -> list[int]:
    if text is None:
        raise ConfigError(f"simulate needs {key}")
    try:
        vals = [int(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{key} must be a list of integers") from None
    if not vals or any(v < 1 for v in vals):
        raise ConfigError(f"{key} must list positive integers")
    return vals


def _path_precision(m: int) -> np.ndarray:
    return np.eye(m) - 0.4 * (np.eye(m, k=1) + np.eye(m, k=-1))


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    rng = chain_rng(cfg.seed, 0)
    summary = {"command": "simulate", "rng": RNG_NAME, "seed": cfg.seed, "model": cfg.model, "files": []}
    if cfg.model == "multiway":
        shape = _ints(cfg.shape, "shape")
        Ks = [_path_precision(m) for m in shape]
        factors = [np.linalg.cholesky(np.linalg.inv(K)) for K in Ks] + [None]
        data = tucker_product(rng.standard_normal(tuple(shape) + (cfg.n,)), factors)
        write_array(out / "data.txt", data)
        for l, K in enumerate(Ks, start=1):
            io.write_matrix_csv(out / f"true_K_{l}.csv", K)
        summary["files"] = ["data.txt"] + [f"true_K_{l}.csv" for l in range(1, len(Ks) + 1)]
    elif cfg.model == "surveillance":
        rows, cols = (_ints(cfg.lattice or "3 3", "lattice") + [1])[:2]
        W = lattice_adjacency(rows, cols)
        if cfg.ar_order not in AR_COEFS:
            raise ConfigError("ar_order must be 1..4")
        if not 0 <= cfg.rho < 1:
            raise ConfigError("rho must lie in [0, 1)")
        try:
            data, truth = st.simulate_surveillance(W, cfg.cancers, cfg.years, rng, rho=cfg.rho,
                                                   ar_coefs=AR_COEFS[cfg.ar_order],
                                                   population=cfg.population)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        io.write_counts(out / "counts.csv", data.y, data.h)
        (out / "adjacency.txt").write_text(format_edge_list(UndirectedGraph.from_adjacency(W)))
        summary["files"] = ["counts.csv", "adjacency.txt"]
        summary["truth"] = {"rho": cfg.rho, "ar_order": cfg.ar_order}
    elif cfg.model == "dlm":
        shape = _ints(cfg.shape, "shape")
        T = cfg.T
        spec = dl.DLMSpec(F=np.ones((T, 1)), H=np.ones((T, 1, 1)), M0=np.zeros(tuple(shape) + (1,)),
                          C0=np.eye(1), W=np.full((T, 1, 1), 0.1))
        Ks = [_path_precision(m) for m in shape]
        Ys, _ = dl.simulate_dlm(spec, Ks, rng)
        names = []
        for t, Y in enumerate(Ys, start=1):
            name = f"series_{t:04d}.txt"
            write_array(out / name, Y)
            names.append(name)
        (out / "spec.cfg").write_text("F = 1\nH = 1\nW = 0.1\nv = 1\nC0 = 1\nM0 = 0\n")
        summary["files"] = names + ["spec.cfg"]
    else:
        raise ConfigError("simulate needs model = multiway | surveillance | dlm")
    return summary


# -- diagnose -------------------------------------------------------------------------------

def cmd_diagnose(cfg: RunConfig, out: Path) -> dict:
    if cfg.traces is None:
        raise ConfigError("diagnose needs --traces")
    successive = io.read_traces(cfg.traces)
    report: dict = {"command": "diagnose"}
    report["ess"] = {k: diagnostics.ess(v) for k, v in successive.items()}
    if cfg.reference is not None:
        marginal = io.read_traces(cfg.reference)
        try:
            result = diagnostics.diagnose(marginal, successive)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        report.update(result.to_dict())
        for r in result.failures:
            print(f"FAIL {r.name}: z = {fmt(r.z)}")
        print(f"{len(result.results) - len(result.failures)}/{len(result.results)} statistics within |z| < 4 "
              f"(expected false failures {result.expected_false_failures:.3g})")
    return report


# -- plumbing -------------------------------------------------------------------------------

def _run_numerical(fn: Callable):
    try:
        with np.errstate(over="ignore", under="ignore"):
            return fn()
    except (ConfigError, DataError):
        raise
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise NumericalError(f"{type(exc).__name__}: {exc}") from exc


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mwggm", description="Multi-way Gaussian graphical models")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = False) -> None:
        p.add_argument("--config", required=config_required, help="key = value configuration file")
        p.add_argument("--seed", type=int, help="base seed (chain c uses seed XOR c)")
        p.add_argument("--chains", type=int, help="number of independent chains")
        p.add_argument("--out-dir", help="output directory (default: current directory)")
        p.add_argument("--threads", type=int, help="worker processes for running chains")

    p = sub.add_parser("simulate", help="simulate a data set")
    common(p, config_required=True)
    p = sub.add_parser("fit-multiway", help="fit the multi-way graphical model to array data")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--dims", type=int, required=True, help="number of array dimensions L")
    p = sub.add_parser("fit-surveillance", help="fit the spatio-temporal Poisson model")
    common(p)
    p.add_argument("--counts", required=True)
    p.add_argument("--adjacency", required=True)
    p = sub.add_parser("fit-dlm", help="fit the array-variate dynamic linear model")
    common(p)
    p.add_argument("--series", nargs="+", required=True, help="one array file per time point, in order")
    p.add_argument("--spec", required=True)
    p = sub.add_parser("diagnose", help="ESS and joint-distribution z-scores from trace files")
    common(p)
    p.add_argument("--traces", required=True, help="successive-conditional trace csv")
    p.add_argument("--reference", help="marginal-conditional trace csv")
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = read_config(args.config, args.command) if args.config else parse_config("", args.command)
    overrides = {}
    for key in ("seed", "chains", "threads", "data", "dims", "counts", "adjacency", "spec", "traces",
                "reference", "out_dir"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    return replace(cfg, **overrides).validate()


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out_dir or ".")
    try:
        cfg = _resolve_config(args)
        out = Path(cfg.out_dir or ".")
        out.mkdir(parents=True, exist_ok=True)
        if cfg.command == "fit-multiway":
            summary = cmd_fit_multiway(cfg, out)
        elif cfg.command == "fit-surveillance":
            summary = cmd_fit_surveillance(cfg, out)
        elif cfg.command == "fit-dlm":
            summary = cmd_fit_dlm(cfg, out, args.series)
        elif cfg.command == "simulate":
            summary = cmd_simulate(cfg, out)
        else:
            summary = cmd_diagnose(cfg, out)
        summary["config"] = as_dict(cfg, exclude=("out_dir", "threads"))
        name = "diagnose.json" if cfg.command == "diagnose" else "summary.json"
        io.write_json(out / name, summary)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "diagnostic.txt").write_text(f"{exc}\n\n{traceback.format_exc()}")
        except OSError:
            pass
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
