"""Command-line interface: fit, tune, simulate, eval.

Every run resolves a flat INI configuration (file values overridden by
flags), writes the fully resolved configuration back out as
``manifest.ini``, and derives all randomness from the single seed, so any
run can be reproduced byte-for-byte from its manifest alone.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .data import PanelData, load_panel_csv, write_panel_csv
from .errors import NumericalError, PanelclustError, ValidationError
from .graph import SpatialGraph, load_adjacency
from .likelihood import Hyperparams
from .partition import Partition
from .prior import MfmPrior, MrfCohesion
from .sampler import (ChainNumericalError, McmcConfig, read_chain_jsonl,
                      run_chain, write_chain_jsonl)
from .selection import SelectionConfig, select_lambda
from .simulate import (builtin_dgp, grid_dgp, load_assignment, write_assignment)
from .summary import dahl_estimate, params_table_csv, rand_index, summarize_params

_DEFAULTS = {
    "data": {"panel": "", "adjacency": "", "rescale_time": "false"},
    "model": {
        "lam": "", "lambda_grid": "", "gamma": "1.0",
        "k_prior": "shifted_poisson", "k_rate": "10.0",
        "mu0": "0.0", "lambda0_scale": "1e-06",
        "a0": "0.1", "b0": "1.0", "a1": "2.0", "b1": "1.0",
        "a2": "2.0", "b2": "1.0",
    },
    "mcmc": {
        "n_iter": "1000", "n_burnin": "500", "n_rep": "30", "m_aux": "3",
        "proposal_sd": "0.01", "thin": "1",
    },
    "selection": {
        "m_total": "1000000", "m_burnin": "10000",
        "warmstart_iters": "1000", "warmstart_burnin": "500",
    },
    "simulate": {"dgp": "", "grid": "", "blocks": "", "block_params": "",
                 "noise_sd": "0.01"},
    "run": {"seed": "0", "outdir": ".", "init": ""},
}


@dataclass
class RunConfig:
    """Resolved configuration for one invocation."""

    values: dict[str, dict[str, str]] = field(default_factory=dict)

    @classmethod
    def resolve(cls, config_path: Optional[str],
                overrides: dict[tuple[str, str], Optional[str]]) -> "RunConfig":
        values = {sec: dict(opts) for sec, opts in _DEFAULTS.items()}
        if config_path:
            parser = configparser.ConfigParser()
            read = parser.read(config_path)
            if not read:
                raise ValidationError(f"config file not found: {config_path}")
            for sec in parser.sections():
                if sec == "meta":
                    continue
                if sec not in values:
                    raise ValidationError(f"unknown config section [{sec}]")
                for key, val in parser.items(sec):
                    if key not in values[sec]:
                        raise ValidationError(
                            f"unknown config key {key!r} in [{sec}]")
                    values[sec][key] = val
        for (sec, key), val in overrides.items():
            if val is not None:
                values[sec][key] = str(val)
        return cls(values)

    def get(self, sec: str, key: str) -> str:
        return self.values[sec][key]

    def getfloat(self, sec: str, key: str) -> float:
        try:
            return float(self.get(sec, key))
        except ValueError:
            raise ValidationError(
                f"[{sec}] {key} must be a number, got {self.get(sec, key)!r}"
            ) from None

    def getint(self, sec: str, key: str) -> int:
        try:
            return int(self.get(sec, key))
        except ValueError:
            raise ValidationError(
                f"[{sec}] {key} must be an integer, got {self.get(sec, key)!r}"
            ) from None

    def getbool(self, sec: str, key: str) -> bool:
        val = self.get(sec, key).strip().lower()
        if val in ("true", "1", "yes", "on"):
            return True
        if val in ("false", "0", "no", "off", ""):
            return False
        raise ValidationError(f"[{sec}] {key} must be a boolean, got {val!r}")

    def float_list(self, sec: str, key: str) -> list[float]:
        raw = self.get(sec, key).strip()
        if not raw:
            return []
        try:
            return [float(v) for v in raw.split(",") if v.strip() != ""]
        except ValueError:
            raise ValidationError(
                f"[{sec}] {key} must be a comma-separated number list") from None

    def hyperparams(self, p: int) -> Hyperparams:
        mu0 = self.float_list("model", "mu0")
        if len(mu0) == 1:
            mu0 = mu0 * p
        if len(mu0) != p:
            raise ValidationError(
                f"mu0 has {len(mu0)} entries for p={p} covariates")
        scale = self.getfloat("model", "lambda0_scale")
        return Hyperparams(
            np.asarray(mu0), scale * np.eye(p),
            a0=self.getfloat("model", "a0"), b0=self.getfloat("model", "b0"),
            a1=self.getfloat("model", "a1"), b1=self.getfloat("model", "b1"),
            a2=self.getfloat("model", "a2"), b2=self.getfloat("model", "b2"))

    def mfm(self, n: int) -> MfmPrior:
        return MfmPrior(self.getfloat("model", "gamma"), n,
                        self.get("model", "k_prior"),
                        self.getfloat("model", "k_rate"))

    def mcmc(self) -> McmcConfig:
        return McmcConfig(
            n_iter=self.getint("mcmc", "n_iter"),
            n_burnin=self.getint("mcmc", "n_burnin"),
            n_rep=self.getint("mcmc", "n_rep"),
            m_aux=self.getint("mcmc", "m_aux"),
            proposal_sd=self.getfloat("mcmc", "proposal_sd"),
            thin=self.getint("mcmc", "thin"),
            seed=self.getint("run", "seed"))

    def selection(self) -> SelectionConfig:
        grid = self.float_list("model", "lambda_grid")
        return SelectionConfig(
            lambda_grid=tuple(grid),
            m_total=self.getint("selection", "m_total"),
            m_burnin=self.getint("selection", "m_burnin"),
            warmstart_iters=self.getint("selection", "warmstart_iters"),
            warmstart_burnin=self.getint("selection", "warmstart_burnin"),
            shared_seed=self.getint("run", "seed"),
            mcmc={"n_rep": self.getint("mcmc", "n_rep"),
                  "m_aux": self.getint("mcmc", "m_aux"),
                  "proposal_sd": self.getfloat("mcmc", "proposal_sd")})

    def load_inputs(self) -> tuple[PanelData, SpatialGraph]:
        panel_path = self.get("data", "panel")
        adjacency_path = self.get("data", "adjacency")
        if not panel_path:
            raise ValidationError("no panel data file configured")
        if not adjacency_path:
            raise ValidationError("no adjacency file configured")
        if not Path(panel_path).exists():
            raise ValidationError(f"panel data file not found: {panel_path}")
        if not Path(adjacency_path).exists():
            raise ValidationError(f"adjacency file not found: {adjacency_path}")
        data = load_panel_csv(panel_path,
                              rescale_time=self.getbool("data", "rescale_time"))
        graph = load_adjacency(adjacency_path)
        if graph.n_locations != data.n_locations:
            raise ValidationError(
                f"adjacency covers {graph.n_locations} locations, "
                f"panel has {data.n_locations}")
        return data, graph

    def write_manifest(self, path, command: str) -> None:
        parser = configparser.ConfigParser()
        for sec, opts in self.values.items():
            parser[sec] = dict(opts)
        parser["meta"] = {"package": "panelclust", "version": __version__,
                          "command": command}
        with open(path, "w", encoding="utf-8") as fh:
            parser.write(fh)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.get("run", "outdir"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def cmd_fit(args) -> int:
    cfg = RunConfig.resolve(args.config, _overrides(args))
    if cfg.get("model", "lambda_grid").strip():
        raise ValidationError("fit takes a fixed lam; lambda_grid is for tune")
    if not cfg.get("model", "lam").strip():
        raise ValidationError("fit requires a lam value (flag --lam or [model] lam)")
    lam = cfg.getfloat("model", "lam")
    data, graph = cfg.load_inputs()
    hp = cfg.hyperparams(data.p)
    mfm = cfg.mfm(data.n_locations)
    mrf = MrfCohesion(lam, graph)
    init = None
    if cfg.get("run", "init").strip():
        init = load_assignment(cfg.get("run", "init"), labels=data.labels)
    out = _outdir(cfg)
    cfg.write_manifest(out / "manifest.ini", "fit")
    try:
        chain = run_chain(data, graph, hp, mfm, mrf, cfg.mcmc(), init=init)
    except ChainNumericalError as exc:
        _dump_json({"iteration": exc.iteration, "assignment": exc.labels},
                   out / "checkpoint.json")
        print(f"numerical failure: {exc} (checkpoint written)", file=sys.stderr)
        return 2
    write_chain_jsonl(chain, out / "chain.jsonl")
    partition, idx = dahl_estimate(chain.partitions)
    report = summarize_params(partition, chain.samples[idx][1],
                              labels=data.labels)
    report["dahl_sample_index"] = idx
    report["lam"] = lam
    report["acceptance_rates"] = chain.acceptance_rates
    _dump_json(report, out / "summary.json")
    params_table_csv(report, out / "summary.csv")
    print(f"fit complete: {partition.n_clusters} clusters, "
          f"outputs in {out}")
    return 0


def cmd_tune(args) -> int:
    cfg = RunConfig.resolve(args.config, _overrides(args))
    if cfg.get("model", "lam").strip():
        raise ValidationError("tune takes a lambda_grid; lam is for fit")
    grid = cfg.float_list("model", "lambda_grid")
    if not grid:
        raise ValidationError("tune requires a lambda_grid")
    data, graph = cfg.load_inputs()
    hp = cfg.hyperparams(data.p)
    mfm = cfg.mfm(data.n_locations)
    out = _outdir(cfg)
    cfg.write_manifest(out / "manifest.ini", "tune")
    lam_star, table = select_lambda(data, graph, hp, mfm, cfg.selection())
    _dump_json({"lambda_grid": [row[0] for row in table],
                "log_marginal": [row[1] for row in table],
                "selected": lam_star},
               out / "selection.json")
    print(f"selected lam = {lam_star}")
    if args.then_fit:
        # chain into a fit at the selected value, in its own directory so
        # both manifests survive
        fit_args = argparse.Namespace(**vars(args))
        fit_args.lam = repr(lam_star)
        fit_args.lambda_grid = ""
        fit_args.outdir = str(out / "fit")
        return cmd_fit(fit_args)
    return 0


def cmd_simulate(args) -> int:
    cfg = RunConfig.resolve(args.config, _overrides(args))
    out = _outdir(cfg)
    seed = cfg.getint("run", "seed")
    dgp = cfg.get("simulate", "dgp").strip()
    grid = cfg.get("simulate", "grid").strip()
    if dgp and grid:
        raise ValidationError("choose one of --dgp and --grid")
    if dgp:
        data, graph, truth = builtin_dgp(cfg.getint("simulate", "dgp"), seed)
        adjacency_src = "us48"
    elif grid:
        rows, cols = _parse_grid(grid)
        blocks = _parse_blocks(cfg.get("simulate", "blocks").strip() or None,
                               rows, cols)
        params = _parse_block_params(
            cfg.get("simulate", "block_params").strip() or None, len(blocks))
        data, graph, truth = grid_dgp(rows, cols, blocks, params,
                                      cfg.getfloat("simulate", "noise_sd"),
                                      seed)
        adjacency_src = f"grid{rows}x{cols}"
    else:
        raise ValidationError("simulate requires --dgp ID or --grid RxC")
    cfg.write_manifest(out / "manifest.ini", "simulate")
    write_panel_csv(data, out / "panel.csv")
    labels = data.labels or graph.labels
    _write_adjacency(graph, out / "adjacency.txt", note=adjacency_src)
    write_assignment(truth, labels, out / "truth.txt")
    print(f"simulated {data.n_locations} locations x {data.n_obs(0)} times "
          f"into {out}")
    return 0


def cmd_eval(args) -> int:
    truth = load_assignment(args.truth)
    chain_path = args.chain
    if chain_path is None and args.config:
        # a fit manifest points at its own chain output
        cfg = RunConfig.resolve(args.config, {})
        candidate = Path(cfg.get("run", "outdir")) / "chain.jsonl"
        if candidate.exists():
            chain_path = candidate
    if args.estimate is None and chain_path is None:
        raise ValidationError("eval requires --estimate or --chain")
    if args.estimate is not None:
        est = load_assignment(args.estimate, labels=_names(args.truth))
        ri = rand_index(truth, est)
        print(f"rand_index {round(ri, 4)}")
    if chain_path is not None:
        records = read_chain_jsonl(chain_path)
        if not records:
            raise ValidationError(f"no samples in {chain_path}")
        partitions = [Partition(rec["assignment"]) for rec in records]
        est, _ = dahl_estimate(partitions)
        ri = rand_index(truth, est)
        print(f"rand_index {round(ri, 4)}")
        counts: dict[int, int] = {}
        for part in partitions:
            counts[part.n_clusters] = counts.get(part.n_clusters, 0) + 1
        hist = {str(k): counts[k] / len(partitions) for k in sorted(counts)}
        print(json.dumps({"cluster_count_histogram": hist}, sort_keys=True))
    return 0


def _names(assignment_path) -> list[str]:
    names = []
    with open(assignment_path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                names.append(line.replace(",", " ").split()[0])
    return names


def _write_adjacency(graph: SpatialGraph, path, note: str = "") -> None:
    labels = graph.labels or [str(i) for i in range(graph.n_locations)]
    with open(path, "w", encoding="utf-8") as fh:
        if note:
            fh.write(f"# {note}\n")
        fh.write("vertices: " + ",".join(labels) + "\n")
        for a, b in sorted(graph.edges):
            fh.write(f"{labels[a]} {labels[b]}\n")


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        rows, cols = text.lower().split("x")
        return int(rows), int(cols)
    except ValueError:
        raise ValidationError(f"--grid expects ROWSxCOLS, got {text!r}") from None


def _parse_blocks(text: Optional[str], rows: int, cols: int
                  ) -> list[tuple[int, int, int, int]]:
    if not text:
        # default: split into left/right halves
        half = cols // 2
        if half == 0 or half == cols:
            raise ValidationError("default block split needs >= 2 columns")
        return [(0, 0, rows - 1, half - 1), (0, half, rows - 1, cols - 1)]
    blocks = []
    for part in text.split(";"):
        vals = [int(v) for v in part.split(",")]
        if len(vals) != 4:
            raise ValidationError(f"block {part!r} must be r0,c0,r1,c1")
        blocks.append(tuple(vals))
    return blocks


def _parse_block_params(text: Optional[str], n_blocks: int) -> list[tuple]:
    if not text:
        base = [((10.0, 5.0), 36.0, 0.1, 10.0), ((-10.0, 4.0), 36.0, 0.1, 10.0),
                ((0.0, 1.0), 36.0, 0.1, 10.0)]
        if n_blocks > len(base):
            raise ValidationError(
                f"--block-params required for {n_blocks} blocks")
        return base[:n_blocks]
    out = []
    for part in text.split(";"):
        vals = [float(v) for v in part.split(",")]
        if len(vals) < 4:
            raise ValidationError(
                f"block params {part!r} must be beta...,sigma2,alpha,ell")
        out.append((tuple(vals[:-3]), vals[-3], vals[-2], vals[-1]))
    if len(out) != n_blocks:
        raise ValidationError(
            f"got {len(out)} parameter sets for {n_blocks} blocks")
    return out


def _overrides(args) -> dict[tuple[str, str], Optional[str]]:
    def flag(name):
        return getattr(args, name, None)
    rescale = getattr(args, "rescale_time", None)
    return {
        ("data", "panel"): flag("data"),
        ("data", "adjacency"): flag("adjacency"),
        ("data", "rescale_time"): ("true" if rescale else None),
        ("model", "lam"): flag("lam"),
        ("model", "lambda_grid"): flag("lambda_grid"),
        ("model", "gamma"): flag("gamma"),
        ("model", "k_prior"): flag("k_prior"),
        ("model", "k_rate"): flag("k_rate"),
        ("mcmc", "n_iter"): flag("n_iter"),
        ("mcmc", "n_burnin"): flag("n_burnin"),
        ("mcmc", "n_rep"): flag("n_rep"),
        ("mcmc", "m_aux"): flag("m_aux"),
        ("mcmc", "proposal_sd"): flag("proposal_sd"),
        ("mcmc", "thin"): flag("thin"),
        ("selection", "m_total"): flag("m_total"),
        ("selection", "m_burnin"): flag("m_burnin"),
        ("selection", "warmstart_iters"): flag("warmstart_iters"),
        ("selection", "warmstart_burnin"): flag("warmstart_burnin"),
        ("simulate", "dgp"): flag("dgp"),
        ("simulate", "grid"): flag("grid"),
        ("simulate", "blocks"): flag("blocks"),
        ("simulate", "block_params"): flag("block_params"),
        ("simulate", "noise_sd"): flag("noise_sd"),
        ("run", "seed"): flag("seed"),
        ("run", "outdir"): flag("outdir"),
        ("run", "init"): flag("init"),
    }


def _add_common(parser) -> None:
    parser.add_argument("--config", help="INI configuration / manifest file")
    parser.add_argument("--data", help="panel CSV path")
    parser.add_argument("--adjacency", help="adjacency file path")
    parser.add_argument("--rescale-time", action="store_true", default=None,
                        dest="rescale_time",
                        help="rescale each location's times onto [-1, 1]")
    parser.add_argument("--outdir", help="output directory")
    parser.add_argument("--seed", help="master seed")
    parser.add_argument("--gamma", help="partition prior Dirichlet weight")
    parser.add_argument("--k-prior", dest="k_prior",
                        choices=["shifted_poisson", "truncated_poisson"])
    parser.add_argument("--k-rate", dest="k_rate")
    parser.add_argument("--n-iter", dest="n_iter")
    parser.add_argument("--n-burnin", dest="n_burnin")
    parser.add_argument("--n-rep", dest="n_rep")
    parser.add_argument("--m-aux", dest="m_aux")
    parser.add_argument("--proposal-sd", dest="proposal_sd")
    parser.add_argument("--thin", dest="thin")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelclust",
        description="Bayesian latent-group regression for spatial panel data",
        allow_abbrev=False)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", allow_abbrev=False,
                            help="run the posterior sampler at fixed lam")
    _add_common(p_fit)
    p_fit.add_argument("--lam", help="spatial smoothness value")
    p_fit.add_argument("--init", help="warm-start assignment file")
    p_fit.set_defaults(func=cmd_fit, lambda_grid=None)

    p_tune = sub.add_parser("tune", allow_abbrev=False,
                             help="select lam over a grid by marginal likelihood")
    _add_common(p_tune)
    p_tune.add_argument("--lambda-grid", dest="lambda_grid",
                        help="comma-separated grid, e.g. 0,0.1,0.2")
    p_tune.add_argument("--m-total", dest="m_total")
    p_tune.add_argument("--m-burnin", dest="m_burnin")
    p_tune.add_argument("--warmstart-iters", dest="warmstart_iters")
    p_tune.add_argument("--warmstart-burnin", dest="warmstart_burnin")
    p_tune.add_argument("--then-fit", action="store_true",
                        help="fit at the selected lam afterwards")
    p_tune.set_defaults(func=cmd_tune, lam=None, init=None, then_fit=False)

    p_sim = sub.add_parser("simulate", allow_abbrev=False,
                            help="generate synthetic panel data")
    _add_common(p_sim)
    p_sim.add_argument("--dgp", type=int, help="built-in process id, 1..8")
    p_sim.add_argument("--grid", help="lattice dims, e.g. 6x4")
    p_sim.add_argument("--blocks", help="rectangles r0,c0,r1,c1;... "
                                        "(default: left/right halves)")
    p_sim.add_argument("--block-params", dest="block_params",
                       help="beta...,sigma2,alpha,ell per block, ;-separated")
    p_sim.add_argument("--noise-sd", dest="noise_sd",
                       help="sd of the first block's coefficient shift "
                            "(default 0.01)")
    p_sim.set_defaults(func=cmd_simulate, lam=None, lambda_grid=None, init=None)

    p_eval = sub.add_parser("eval", allow_abbrev=False,
                             help="compare partitions / inspect a chain")
    p_eval.add_argument("--config", help="fit manifest; supplies the chain path")
    p_eval.add_argument("--truth", required=True, help="truth assignment file")
    p_eval.add_argument("--estimate", help="estimate assignment file")
    p_eval.add_argument("--chain", help="chain JSON-lines file")
    p_eval.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ChainNumericalError:
        raise  # handled (with checkpoint) inside cmd_fit
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (PanelclustError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
