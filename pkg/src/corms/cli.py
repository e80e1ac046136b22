"""Command-line surface.

Exit codes: 0 success, 1 usage errors, 2 validation or configuration
errors, 3 numeric failures (including a failed pEPPF check).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from .analytics import (
    DensityGrid,
    baseline_mixture_draw,
    default_grid,
    exceedance_probability,
    mixture_density_draw,
    scalar_summary,
)
from .config import RunConfig, load_config
from .data import SCENARIO_NAMES, generate_scenario
from .errors import NumericError, UnsupportedKernelError, ValidationError
from .kernels import NigParams, nig_sample_atoms
from .measures import (
    GammaScores,
    StableDirecting,
    attach_scores,
    fk_prior_trajectory,
    sample_nested_prior,
)
from .numerics import QuadratureSpec
from .partitions import peppf_corm, similarity_matrix, vi_point_estimate
from .posterior import FrequencyTable
from .records import ChainFile, ChainRecord, ChainWriter, read_chain
from .samplers import run_chain

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits with code 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="corms",
        description=(
            "Mixture modelling with vectors of compound random measures: "
            "prior simulation, posterior sampling, clustering and density "
            "summaries."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-prior", help="draw from the prior measure")
    p.add_argument("--kind", choices=("corm", "ncorm"), default="corm")
    p.add_argument("--d", type=int, default=2, help="number of groups")
    p.add_argument("--q", type=int, default=2, help="components (ncorm)")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--phi", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--draws", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_simulate_prior)

    p = sub.add_parser("generate-data", help="draw a synthetic scenario")
    p.add_argument("--scenario", required=True, choices=SCENARIO_NAMES)
    p.add_argument("--n", type=int, default=50, help="observations per group")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--output", required=True, help="CSV path (group, value)")
    p.add_argument("--truth", help="optional JSON path for the truth record")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("fit", help="run the posterior sampler")
    p.add_argument("--config", required=True)
    p.add_argument("--chain-id", type=int, default=0)
    p.add_argument("--output", help="override the configured chain path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", help="partition point estimates")
    p.add_argument("--chain", required=True)
    p.add_argument("--output", required=True, help="prefix for CSV outputs")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("density", help="posterior density grids per group")
    p.add_argument("--config", required=True)
    p.add_argument(
        "--chain",
        help="chain file with stored density rows; omitted, the chain is "
        "rerun from the configuration",
    )
    p.add_argument("--output", required=True, help="prefix for CSV outputs")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("exceedance", help="threshold exceedance per group")
    p.add_argument("--config", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--output", help="optional CSV path")
    p.set_defaults(func=cmd_exceedance)

    p = sub.add_parser(
        "peppf-check", help="analytic tie probability against Monte Carlo"
    )
    p.add_argument("--d", type=int, default=2, choices=(1, 2))
    p.add_argument("--n", type=int, default=2, help="total observations")
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--phi", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--draws", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_peppf_check)

    return parser


def _float_cell(value: float) -> str:
    return repr(float(value))


def _write_csv(path, header: list, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def cmd_simulate_prior(args) -> int:
    if args.d < 1:
        raise ValidationError("--d must be at least 1")
    if args.draws < 1:
        raise ValidationError("--draws must be at least 1")
    dm = StableDirecting(args.sigma, args.phi)
    sd = GammaScores(args.phi)
    nig = NigParams(m0=0.0, k0=1.0, a0=2.0, b0=1.0)
    base = lambda r, n: nig_sample_atoms(nig, n, r)
    rng = np.random.default_rng(args.seed)
    with open(args.output, "w", encoding="utf-8") as handle:
        header = {
            "format": "corms-prior",
            "version": 1,
            "kind": args.kind,
            "d": args.d,
            "sigma": args.sigma,
            "phi": args.phi,
            "epsilon": args.epsilon,
            "seed": args.seed,
        }
        if args.kind == "ncorm":
            header.update(q=args.q, beta=args.beta)
        handle.write(json.dumps(header, separators=(",", ":")) + "\n")
        for index in range(args.draws):
            if args.kind == "corm":
                traj = fk_prior_trajectory(dm, base, args.epsilon, rng)
                cv = attach_scores(traj, sd, args.d, rng)
                payload = {
                    "draw": index,
                    "jumps": traj.jumps.tolist(),
                    "atoms": traj.atoms.tolist(),
                    "scores": cv.scores.tolist(),
                }
            else:
                draw = sample_nested_prior(
                    args.q, args.beta, dm, sd, args.d, base, args.epsilon, rng
                )
                payload = {
                    "draw": index,
                    "jumps": draw.trajectory.jumps.tolist(),
                    "atoms": draw.trajectory.atoms.tolist(),
                    "scores": draw.scores.tolist(),
                    "pi": draw.pi.tolist(),
                    "labels": draw.labels.tolist(),
                }
            handle.write(json.dumps(payload, separators=(",", ":")) + "\n")
    print(f"wrote {args.draws} prior draws to {args.output}")
    return 0


def cmd_generate_data(args) -> int:
    data, truth = generate_scenario(args.scenario, args.n, args.seed)
    rows = []
    for gid, values in zip(data.ids, data.groups):
        for value in values:
            rows.append((gid, _float_cell(value)))
    _write_csv(args.output, ["group", "value"], rows)
    if args.truth:
        payload = {
            "scenario": truth.name,
            "means": list(truth.means),
            "group_distributions": list(truth.group_distributions),
            "component_weights": [list(w) for w in truth.component_weights],
            "component_means": [list(m) for m in truth.component_means],
            "nested_labels": (
                None
                if truth.nested_labels is None
                else truth.nested_labels.tolist()
            ),
            "assignments": [a.tolist() for a in truth.assignments],
        }
        with open(args.truth, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=1)
            handle.write("\n")
    print(
        f"wrote {sum(data.sizes)} observations in {data.d} groups "
        f"to {args.output}"
    )
    return 0


def _fit_records(config: RunConfig, chain_id: int):
    """Run the configured chain, yielding (grid or None, meta, records)."""
    data, _ = config.data.load()
    arrays = data.as_list()
    config.model.kernel.validate_data(np.concatenate(arrays))
    grid = None
    if config.output.store_densities:
        grid = default_grid(
            np.concatenate(arrays),
            config.model.kernel,
            points=config.output.grid_points,
        )
    meta = {
        "kind": config.model.kind,
        "kernel": config.model.kernel.variant,
        "group_ids": list(data.ids),
        "sizes": [int(s) for s in data.sizes],
    }

    def records():
        for iteration, state in run_chain(arrays, config.model, config.chain):
            functionals = {}
            for key in ("accept_sigma", "accept_phi"):
                value = state.diagnostics.get(key, math.nan)
                if isinstance(value, float) and math.isfinite(value):
                    functionals[key] = value
            densities = None
            if grid is not None:
                densities = {
                    gid: mixture_density_draw(
                        state, config.model.kernel, j, grid
                    )
                    for j, gid in enumerate(data.ids)
                }
                densities["baseline"] = baseline_mixture_draw(
                    state, config.model.kernel, grid
                )
            yield ChainRecord.from_state(
                iteration,
                state,
                chain_id=chain_id,
                functionals=functionals,
                densities=densities,
            )

    return grid, meta, records()


def cmd_fit(args) -> int:
    config = load_config(args.config)
    path = args.output or config.output.chain_path
    grid, meta, records = _fit_records(config, args.chain_id)
    count = 0
    with ChainWriter(path, grid=grid, meta=meta) as sink:
        for record in records:
            sink.write(record)
            count += 1
    print(f"wrote {count} records to {path}")
    return 0


def _require_records(chain: ChainFile, path) -> None:
    if not chain.records:
        raise ValidationError(f"{path} holds no chain records")


def cmd_summarize(args) -> int:
    chain = read_chain(args.chain)
    _require_records(chain, args.chain)
    records = chain.records
    meta = chain.header.get("meta") or {}
    label_draws = np.vstack([r.labels for r in records])
    point = vi_point_estimate(label_draws)
    similarity = similarity_matrix(label_draws)

    group_ids = meta.get("group_ids")
    sizes = meta.get("sizes")
    if group_ids is None or sizes is None:
        group_ids = [str(j + 1) for j in range(records[0].u.size)]
        sizes = [0] * len(group_ids)

    rows = []
    offset = 0
    for gid, size in zip(group_ids, sizes):
        size = int(size) if size else 0
        for i in range(size):
            rows.append((gid, i, int(point[offset + i])))
        offset += size
    if not rows:
        rows = [("all", i, int(v)) for i, v in enumerate(point)]
    _write_csv(
        f"{args.output}_partition.csv", ["group", "index", "cluster"], rows
    )
    _write_csv(
        f"{args.output}_similarity.csv",
        [f"obs_{i}" for i in range(similarity.shape[0])],
        ([_float_cell(v) for v in row] for row in similarity),
    )

    sigma = np.asarray([r.sigma for r in records])
    phi = np.asarray([r.phi for r in records])
    k = np.asarray([r.k for r in records])
    print(f"records: {len(records)}")
    print(f"observation clusters (posterior mean): {k.mean():.2f}")
    print(f"observation partition point estimate: {int(point.max()) + 1} clusters")
    print(f"sigma posterior mean: {sigma.mean():.4f}")
    print(f"phi posterior mean: {phi.mean():.4f}")

    if meta.get("kind") == "ncorm":
        comp_draws = np.vstack([r.comp for r in records])
        nested_point = vi_point_estimate(comp_draws)
        nested_similarity = similarity_matrix(comp_draws)
        _write_csv(
            f"{args.output}_nested_partition.csv",
            ["group", "component"],
            [
                (gid, int(label))
                for gid, label in zip(group_ids, nested_point)
            ],
        )
        _write_csv(
            f"{args.output}_nested_similarity.csv",
            list(group_ids),
            ([_float_cell(v) for v in row] for row in nested_similarity),
        )
        print(
            "nested partition point estimate: "
            + " ".join(str(int(v)) for v in nested_point)
        )
    return 0


def _density_csv(path, grid: np.ndarray, table: DensityGrid) -> None:
    mean, lo, hi = table.summary()
    _write_csv(
        path,
        ["grid", "mean", "lo", "hi"],
        (
            (
                _float_cell(grid[i]),
                _float_cell(mean[i]),
                _float_cell(lo[i]),
                _float_cell(hi[i]),
            )
            for i in range(grid.size)
        ),
    )


def cmd_density(args) -> int:
    config = load_config(args.config)
    level = config.output.level
    tables: dict[str, DensityGrid] = {}
    if args.chain:
        chain = read_chain(args.chain)
        _require_records(chain, args.chain)
        grid = chain.grid
        if grid is None or not all(
            r.densities is not None for r in chain.records
        ):
            raise ValidationError(
                f"{args.chain} stores no density rows; rerun fit with "
                "store_densities = true, or omit --chain to recompute"
            )
        names = sorted(chain.records[0].densities)
        for name in names:
            table = DensityGrid(grid, level=level)
            for record in chain.records:
                table.append(record.densities[name])
            tables[name] = table
    else:
        data, _ = config.data.load()
        arrays = data.as_list()
        config.model.kernel.validate_data(np.concatenate(arrays))
        grid = default_grid(
            np.concatenate(arrays),
            config.model.kernel,
            points=config.output.grid_points,
        )
        for gid in list(data.ids) + ["baseline"]:
            tables[gid] = DensityGrid(grid, level=level)
        for _, state in run_chain(arrays, config.model, config.chain):
            for j, gid in enumerate(data.ids):
                tables[gid].append(
                    mixture_density_draw(state, config.model.kernel, j, grid)
                )
            tables["baseline"].append(
                baseline_mixture_draw(state, config.model.kernel, grid)
            )
    for name, table in tables.items():
        suffix = name if name == "baseline" else f"group_{name}"
        _density_csv(f"{args.output}_{suffix}.csv", grid, table)
    print(f"wrote {len(tables)} density tables with prefix {args.output}")
    return 0


def cmd_exceedance(args) -> int:
    config = load_config(args.config)
    if config.model.kernel.variant != "lognormal":
        raise UnsupportedKernelError(
            "exceedance probabilities need the log-normal kernel; the "
            f"configuration sets {config.model.kernel.variant!r}"
        )
    if not args.threshold > 0.0:
        raise ValidationError("--threshold must be positive")
    data, _ = config.data.load()
    arrays = data.as_list()
    config.model.kernel.validate_data(np.concatenate(arrays))
    draws: list[list[float]] = [[] for _ in range(data.d)]
    for _, state in run_chain(arrays, config.model, config.chain):
        for j in range(data.d):
            draws[j].append(
                exceedance_probability(
                    state, config.model.kernel, j, args.threshold
                )
            )
    rows = []
    for gid, values in zip(data.ids, draws):
        mean, lo, hi = scalar_summary(
            np.asarray(values), level=config.output.level
        )
        rows.append((gid, _float_cell(mean), _float_cell(lo), _float_cell(hi)))
        print(
            f"group {gid}: P(Y > {args.threshold:g}) = {mean:.4f} "
            f"[{lo:.4f}, {hi:.4f}]"
        )
    if args.output:
        _write_csv(args.output, ["group", "mean", "lo", "hi"], rows)
    return 0


def cmd_peppf_check(args) -> int:
    if args.n != 2:
        raise ValidationError("the check is defined for --n 2")
    if not (0.0 < args.sigma < 1.0) or args.phi <= 0.0:
        raise ValidationError("need sigma in (0, 1) and phi > 0")
    if args.draws < 100:
        raise ValidationError("need at least 100 Monte Carlo draws")
    dm = StableDirecting(args.sigma, args.phi)
    sd = GammaScores(args.phi)
    counts = np.array([[1, 1]]) if args.d == 2 else np.array([[2]])
    analytic = peppf_corm(
        FrequencyTable(counts), dm, sd, 1.0, QuadratureSpec()
    )
    rng = np.random.default_rng(args.seed)
    probs = np.empty(args.draws)
    for b in range(args.draws):
        traj = fk_prior_trajectory(dm, lambda r, n: np.zeros(n), args.epsilon, rng)
        if args.d == 2:
            w1 = sd.sample(rng, traj.size) * traj.jumps
            w2 = sd.sample(rng, traj.size) * traj.jumps
            probs[b] = float(np.sum(w1 * w2) / (w1.sum() * w2.sum()))
        else:
            w = sd.sample(rng, traj.size) * traj.jumps
            w /= w.sum()
            probs[b] = float(np.sum(w * w))
    estimate = float(probs.mean())
    se = float(probs.std(ddof=1) / math.sqrt(args.draws))
    z = (estimate - analytic) / se if se > 0.0 else math.inf
    passed = abs(z) <= 3.0
    print(f"analytic tie probability: {analytic:.10f}")
    print(f"monte carlo estimate:     {estimate:.10f}")
    print(f"standard error:           {se:.2e} ({args.draws} draws)")
    print(f"z-score: {z:+.2f} -> {'PASS' if passed else 'FAIL'}")
    return 0 if passed else 3


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
