"""Command line driver for batch fitting, selection, and simulation.

Subcommands
-----------
fit        Fit one model and write its parameters.
select     Compare candidate ranks by an information criterion or CV.
decompose  Rotate a saved fit into orthonormal components.
predict    Evaluate a saved fit at chosen cells.
simulate   Run the Monte Carlo recovery/prediction harness.

Conventions: scalar results go to JSON, matrices to CSV, all diagnostics
to standard error. Every run writes a ``manifest.json`` recording the
resolved flags, input digests, seed, and package version; re-running
with the manifest's flags reproduces the outputs bit for bit (the
manifest itself also records the wall-clock duration, which of course
varies). The environment variable ``FPCA_SEED`` supplies the default
seed; ``--threads`` caps worker processes without changing any output.
"""

import argparse
import csv
import difflib
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .dataset import (
    ObservationSet,
    compact,
    load_coordinate_csv,
    load_dense_csv,
    window_minus_window,
)
from .decomposition import explained_g2, orthogonalize
from .errors import DataError, DomainError, FlexpcaError
from .families import family_from_name
from .fitting import FpcaConfig, FpcaFit, fit_fpca, min_coverage, variant_has_gamma
from .selection import select_k_cv, select_k_gic
from .simulate import SimDesign, run_k_recovery

__all__ = ["run", "main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that raises instead of exiting, with suggestions."""

    def _known_option_strings(self):
        known = list(self._option_string_actions)
        for action in self._subparsers._group_actions if self._subparsers else ():
            for sub in getattr(action, "choices", {}).values():
                known.extend(sub._option_string_actions)
        return known

    def error(self, message):
        if message.startswith("unrecognized arguments:"):
            unknown = [t for t in message.split() if t.startswith("--")]
            known = self._known_option_strings()
            hints = []
            for token in unknown:
                close = difflib.get_close_matches(token, known, n=1)
                if close:
                    hints.append(f"did you mean {close[0]}?")
            if hints:
                message = f"{message} ({' '.join(hints)})"
        raise _UsageError(f"{self.prog}: {message}")


def _add_input_options(p):
    p.add_argument("--input", help="input CSV path")
    p.add_argument(
        "--input-format",
        choices=("coordinate", "dense"),
        default="coordinate",
        help="coordinate CSV (row,col,value) or dense grid CSV",
    )
    p.add_argument("--na-token", default="NA", help="missing marker in dense CSVs")
    p.add_argument("--n-rows", type=int, help="grid rows (coordinate input)")
    p.add_argument("--n-cols", type=int, help="grid cols (coordinate input)")
    p.add_argument(
        "--outer",
        metavar="R0,C0,R1,C1",
        help="keep only cells inside this rectangle (0-based, end-exclusive)",
    )
    p.add_argument(
        "--inner",
        metavar="R0,C0,R1,C1",
        help="additionally drop cells inside this rectangle",
    )
    p.add_argument(
        "--allow-empty",
        action="store_true",
        help="permit a window selection that keeps no cells",
    )


def _add_run_options(p):
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default: $FPCA_SEED or 0)")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument(
        "--threads",
        type=int,
        default=os.cpu_count() or 1,
        help="maximum worker processes; outputs do not depend on this",
    )


def _add_model_options(p):
    p.add_argument(
        "--family",
        default="gaussian",
        choices=("gaussian", "poisson", "bernoulli", "quasipoisson"),
    )
    p.add_argument(
        "--variant",
        default="covariance",
        choices=("simple", "covariance", "correlation"),
    )
    p.add_argument("--starts", type=int, default=5, help="random restarts")
    p.add_argument("--tol", type=float, default=1e-7, help="outer convergence tolerance")
    p.add_argument("--max-outer", type=int, default=500, help="outer iteration budget")


def build_parser():
    parser = _Parser(prog="flexpca", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"flexpca {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND", parser_class=_Parser)

    p_fit = sub.add_parser("fit", help="fit one model")
    _add_input_options(p_fit)
    _add_model_options(p_fit)
    _add_run_options(p_fit)
    p_fit.add_argument("--k", type=int, required=True, help="number of components")
    p_fit.set_defaults(func=_cmd_fit)

    p_sel = sub.add_parser("select", help="choose the rank")
    _add_input_options(p_sel)
    _add_model_options(p_sel)
    _add_run_options(p_sel)
    p_sel.add_argument(
        "--rule",
        default="bic",
        help="'bic', 'aic', 'cv', or a numeric penalty multiplier",
    )
    p_sel.add_argument("--k-min", type=int, default=1)
    p_sel.add_argument("--k-max", type=int, default=None, help="default: min(10, coverage bound)")
    p_sel.add_argument("--candidates", help="explicit comma-separated ranks (overrides k-min/k-max)")
    p_sel.add_argument("--k-ref", type=int, default=None, help="reference rank for the shared dispersion")
    p_sel.add_argument("--cv-q", type=float, default=0.2, help="test fraction for --rule cv")
    p_sel.add_argument("--cv-reps", type=int, default=10, help="repetitions for --rule cv")
    p_sel.set_defaults(func=_cmd_select)

    p_dec = sub.add_parser("decompose", help="orthonormal components of a saved fit")
    _add_input_options(p_dec)
    _add_run_options(p_dec)
    p_dec.add_argument("--fit-dir", required=True, help="directory written by 'fit'")
    p_dec.set_defaults(func=_cmd_decompose)

    p_pre = sub.add_parser("predict", help="evaluate a saved fit at cells")
    _add_input_options(p_pre)
    _add_run_options(p_pre)
    p_pre.add_argument("--fit-dir", required=True, help="directory written by 'fit'")
    p_pre.add_argument(
        "--cells",
        default="missing",
        help="'all', 'observed', 'missing', or a CSV of row,col pairs",
    )
    p_pre.add_argument(
        "--difference",
        action="store_true",
        help="with --cells observed, also write |observed - mu| as difference.csv",
    )
    p_pre.set_defaults(func=_cmd_predict)

    p_sim = sub.add_parser("simulate", help="Monte Carlo recovery harness")
    _add_run_options(p_sim)
    p_sim.add_argument("--n", type=int, required=True, help="grid rows")
    p_sim.add_argument("--p", type=int, required=True, help="grid cols")
    p_sim.add_argument("--k-true", type=int, required=True)
    p_sim.add_argument("--tau", type=float, required=True, help="missing probability")
    p_sim.add_argument("--noise-sd", type=float, default=0.1)
    p_sim.add_argument("--mu-mean", type=float, default=0.5)
    p_sim.add_argument("--mu-sd", type=float, default=2.0)
    p_sim.add_argument("--replications", type=int, default=100)
    p_sim.add_argument("--rules", default="bic", help="comma-separated: bic,aic,cv")
    p_sim.add_argument("--candidates", help="comma-separated candidate ranks")
    p_sim.add_argument("--starts", type=int, default=5)
    p_sim.add_argument("--rmsep", action="store_true", help="also score hidden-cell predictions")
    p_sim.set_defaults(func=_cmd_simulate)

    return parser


def run(argv=None):
    """Execute one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        print("error: flexpca: a subcommand is required (see --help)", file=sys.stderr)
        return 1
    try:
        args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FlexpcaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run(sys.argv[1:]))


# -- shared plumbing -----------------------------------------------------


def _resolve_seed(args):
    if args.seed is not None:
        return int(args.seed)
    return int(os.environ.get("FPCA_SEED", "0"))


def _parse_rect(text, flag):
    parts = [t.strip() for t in str(text).split(",")]
    if len(parts) != 4:
        raise _UsageError(f"{flag} expects R0,C0,R1,C1, got {text!r}")
    try:
        return tuple(int(t) for t in parts)
    except ValueError:
        raise _UsageError(f"{flag} expects four integers, got {text!r}") from None


def _load_input(args, required=True):
    if args.input is None:
        if required:
            raise _UsageError(f"{args.subcommand}: --input is required")
        return None
    if args.input_format == "dense":
        s = load_dense_csv(args.input, na_token=args.na_token)
    else:
        s = load_coordinate_csv(args.input, n_rows=args.n_rows, n_cols=args.n_cols)
    if args.outer is not None:
        inner = _parse_rect(args.inner, "--inner") if args.inner is not None else None
        s = window_minus_window(
            s,
            _parse_rect(args.outer, "--outer"),
            inner,
            allow_empty=args.allow_empty,
        )
    elif args.inner is not None:
        raise _UsageError("--inner requires --outer")
    return s


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    return repr(value) if np.isfinite(value) else ""


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def _write_manifest(args, out_dir, inputs, seed, started):
    skip = {"func", "subcommand"}
    flags = {
        key.replace("_", "-"): _jsonable(value)
        for key, value in sorted(vars(args).items())
        if key not in skip
    }
    manifest = {
        "subcommand": args.subcommand,
        "flags": flags,
        "inputs": {path: _digest(path) for path in inputs},
        "seed": seed,
        "version": __version__,
        "duration_seconds": round(time.monotonic() - started, 3),
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)


def _prepare_out(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _matrix_rows(labels, matrix):
    for label, row in zip(labels, matrix):
        yield [int(label), *row]


# -- fit -----------------------------------------------------------------


def _cmd_fit(args):
    started = time.monotonic()
    seed = _resolve_seed(args)
    out = _prepare_out(args)
    s = _load_input(args)
    sc, rows_fitted, cols_fitted = compact(s)
    family = family_from_name(args.family)
    config = FpcaConfig(
        k=args.k,
        n_starts=args.starts,
        seed=seed,
        tol=args.tol,
        max_outer_iter=args.max_outer,
    )
    fit = fit_fpca(sc, args.variant, family, config)

    comp_header = [f"comp_{r + 1}" for r in range(fit.k)]
    _write_csv(
        os.path.join(out, "alpha.csv"),
        ["row", *comp_header],
        _matrix_rows(rows_fitted, fit.alpha),
    )
    _write_csv(
        os.path.join(out, "beta.csv"),
        ["col", *comp_header],
        _matrix_rows(cols_fitted, fit.beta),
    )
    _write_csv(
        os.path.join(out, "gamma.csv"),
        ["col", "gamma"],
        _matrix_rows(cols_fitted, fit.gamma[:, None]),
    )
    _write_json(
        os.path.join(out, "fit.json"),
        {
            "family": family.name,
            "variant": args.variant,
            "k": fit.k,
            "n_rows": s.n_rows,
            "n_cols": s.n_cols,
            "n_obs": s.n_obs,
            "loglik": fit.loglik,
            "deviance": fit.deviance,
            "phi": fit.phi,
            "converged": fit.converged,
            "start_index": fit.start_index,
            "n_outer_iterations": fit.n_outer_iterations,
            "rows_fitted": rows_fitted,
            "cols_fitted": cols_fitted,
            "seed": seed,
        },
    )
    _write_manifest(args, out, [args.input], seed, started)


# -- select ----------------------------------------------------------------


def _parse_int_list(text):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise _UsageError(f"expected comma-separated integers, got {text!r}") from None


def _cmd_select(args):
    started = time.monotonic()
    seed = _resolve_seed(args)
    out = _prepare_out(args)
    s = _load_input(args)
    sc, _, cols_fitted = compact(s)
    family = family_from_name(args.family)
    config = FpcaConfig(
        k=1,
        n_starts=args.starts,
        seed=seed,
        tol=args.tol,
        max_outer_iter=args.max_outer,
    )
    if args.candidates:
        candidates = _parse_int_list(args.candidates)
    else:
        slack = 2 if variant_has_gamma(args.variant) else 1
        bound = int(min(sc.cover_rows().min(), sc.cover_cols().min())) - slack
        k_max = args.k_max if args.k_max is not None else min(10, bound)
        if k_max < args.k_min:
            raise DomainError(
                f"no admissible candidates: k_min={args.k_min}, k_max={k_max} "
                "(coverage bound too small?)"
            )
        candidates = list(range(args.k_min, k_max + 1))

    rule = args.rule.lower()
    if rule == "cv":
        res = select_k_cv(
            sc,
            args.variant,
            family,
            candidates,
            q=args.cv_q,
            n_repetitions=args.cv_reps,
            config=config,
        )
        payload = {
            "rule": "cv",
            "chosen_k": res.chosen_k,
            "candidates": candidates,
            "kappa": None,
            "k_ref": None,
            "phi_reference": None,
            "table": [
                {"k": k, "mean_test_deviance": v} for (k, v) in res.table
            ],
            "cv": {
                "q": res.q,
                "n_repetitions": res.n_repetitions,
                "split_seeds": res.split_seeds,
                "test_sizes": res.test_sizes,
                "per_repetition": res.per_repetition,
            },
            "seed": seed,
        }
        _write_csv(
            os.path.join(out, "selection.csv"),
            ["k", "mean_test_deviance"],
            [[k, v] for (k, v) in res.table],
        )
    else:
        try:
            rule_arg = rule if rule in ("bic", "aic") else float(args.rule)
        except ValueError:
            raise _UsageError(
                f"--rule must be 'bic', 'aic', 'cv' or a number, got {args.rule!r}"
            ) from None
        res = select_k_gic(
            sc,
            args.variant,
            family,
            candidates,
            rule=rule_arg,
            config=config,
            k_ref=args.k_ref,
        )
        payload = {
            "rule": res.kappa_rule,
            "chosen_k": res.chosen_k,
            "candidates": candidates,
            "kappa": res.kappa,
            "k_ref": res.k_ref,
            "phi_reference": res.phi_reference,
            "cols_fitted": cols_fitted if np.ndim(res.phi_reference) == 1 else None,
            "table": [
                {"k": k, "loglik": ll, "df": df, "gic": g}
                for (k, ll, df, g) in res.table
            ],
            "cv": None,
            "seed": seed,
        }
        _write_csv(
            os.path.join(out, "selection.csv"),
            ["k", "loglik", "df", "gic"],
            [[k, ll, df, g] for (k, ll, df, g) in res.table],
        )
    _write_json(os.path.join(out, "selection.json"), payload)
    _write_manifest(args, out, [args.input], seed, started)


# -- decompose / predict ---------------------------------------------------


def _read_matrix_csv(path, expect_first):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != expect_first:
            raise DataError(f"{path}: expected first column {expect_first!r}")
        labels, rows = [], []
        for record in reader:
            labels.append(int(record[0]))
            rows.append([float(v) for v in record[1:]])
    return np.asarray(labels, dtype=np.int64), np.asarray(rows, dtype=float)


def _read_fit_bundle(fit_dir):
    meta_path = os.path.join(fit_dir, "fit.json")
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"{meta_path}: not found; is --fit-dir a 'fit' output?") from None
    rows_fitted, alpha = _read_matrix_csv(os.path.join(fit_dir, "alpha.csv"), "row")
    cols_fitted, beta = _read_matrix_csv(os.path.join(fit_dir, "beta.csv"), "col")
    gamma = None
    gamma_path = os.path.join(fit_dir, "gamma.csv")
    if os.path.exists(gamma_path):
        _, gamma_mat = _read_matrix_csv(gamma_path, "col")
        gamma = gamma_mat[:, 0]
    fit = FpcaFit(
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        phi=meta.get("phi", 1.0),
        loglik=meta.get("loglik", np.nan),
        deviance=meta.get("deviance", np.nan),
        loglik_trace=np.empty(0),
        start_index=meta.get("start_index", 0),
        converged=meta.get("converged", True),
        variant=meta["variant"],
        family_name=meta["family"],
        k=meta["k"],
        n_rows=alpha.shape[0],
        n_cols=beta.shape[0],
    )
    return fit, meta, rows_fitted, cols_fitted


def _map_to_fitted(s, rows_fitted, cols_fitted):
    """Re-index a set from original grid labels to fitted positions."""
    row_map = {int(r): i for i, r in enumerate(rows_fitted)}
    col_map = {int(c): j for j, c in enumerate(cols_fitted)}
    try:
        rows = np.asarray([row_map[int(r)] for r in s.rows], dtype=np.int64)
        cols = np.asarray([col_map[int(c)] for c in s.cols], dtype=np.int64)
    except KeyError as exc:
        raise DataError(
            f"input references row/col {exc.args[0]} that the fit never saw"
        ) from None
    return ObservationSet(len(rows_fitted), len(cols_fitted), rows, cols, s.values)


def _cmd_decompose(args):
    started = time.monotonic()
    seed = _resolve_seed(args)
    out = _prepare_out(args)
    fit, meta, rows_fitted, cols_fitted = _read_fit_bundle(args.fit_dir)
    decomp = orthogonalize(fit)
    comp_header = [f"comp_{r + 1}" for r in range(decomp.d.size)]
    _write_csv(
        os.path.join(out, "pcs.csv"),
        ["row", *comp_header],
        _matrix_rows(rows_fitted, decomp.u * decomp.d),
    )
    _write_csv(
        os.path.join(out, "loadings.csv"),
        ["col", *comp_header],
        _matrix_rows(cols_fitted, decomp.v),
    )
    explained = None
    inputs = []
    s = _load_input(args, required=False)
    if s is not None:
        inputs.append(args.input)
        sm = _map_to_fitted(s, rows_fitted, cols_fitted)
        report = explained_g2(sm, decomp)
        explained = {
            "null_deviance": report.null_deviance,
            "deviances": report.deviances,
            "cumulative": report.cumulative,
            "increments": report.increments,
            "monotone": report.monotone,
        }
        _write_csv(
            os.path.join(out, "explained.csv"),
            ["component", "weight", "increment", "cumulative"],
            [
                [m + 1, decomp.d[m], report.increments[m], report.cumulative[m + 1]]
                for m in range(decomp.d.size)
            ],
        )
    _write_json(
        os.path.join(out, "decomposition.json"),
        {
            "family": meta["family"],
            "variant": meta["variant"],
            "weights": decomp.d,
            "n_components": int(decomp.d.size),
            "explained": explained,
        },
    )
    _write_manifest(args, out, inputs, seed, started)


def _cmd_predict(args):
    started = time.monotonic()
    seed = _resolve_seed(args)
    out = _prepare_out(args)
    fit, meta, rows_fitted, cols_fitted = _read_fit_bundle(args.fit_dir)
    family = family_from_name(meta["family"])

    choice = args.cells
    observed = None
    inputs = []
    if choice in ("observed", "missing"):
        s = _load_input(args)
        inputs.append(args.input)
        observed = _map_to_fitted(s, rows_fitted, cols_fitted)

    if choice == "all":
        rows = np.repeat(np.arange(fit.n_rows), fit.n_cols)
        cols = np.tile(np.arange(fit.n_cols), fit.n_rows)
        values = None
    elif choice == "observed":
        rows, cols, values = observed.rows, observed.cols, observed.values
    elif choice == "missing":
        all_codes = (
            np.repeat(np.arange(fit.n_rows), fit.n_cols) * fit.n_cols
            + np.tile(np.arange(fit.n_cols), fit.n_rows)
        )
        hidden = ~np.isin(all_codes, observed.cell_codes())
        rows, cols = np.divmod(all_codes[hidden], fit.n_cols)
        values = None
    else:
        inputs.append(choice)
        cells = _read_cells_csv(choice)
        row_map = {int(r): i for i, r in enumerate(rows_fitted)}
        col_map = {int(c): j for j, c in enumerate(cols_fitted)}
        try:
            rows = np.asarray([row_map[r] for r, _ in cells], dtype=np.int64)
            cols = np.asarray([col_map[c] for _, c in cells], dtype=np.int64)
        except KeyError as exc:
            raise DataError(
                f"cell list references row/col {exc.args[0]} that the fit never saw"
            ) from None
        values = None

    if args.difference and values is None:
        raise _UsageError("--difference requires --cells observed")

    eta = fit.eta(rows, cols)
    mu = family.inv_link(eta)
    header = ["row", "col", "eta", "mu"]
    out_rows = []
    for i in range(rows.size):
        record = [int(rows_fitted[rows[i]]), int(cols_fitted[cols[i]]), eta[i], mu[i]]
        if values is not None:
            record.append(values[i])
        out_rows.append(record)
    if values is not None:
        header.append("observed")
    _write_csv(os.path.join(out, "predictions.csv"), header, out_rows)
    if args.difference:
        _write_csv(
            os.path.join(out, "difference.csv"),
            ["row", "col", "value"],
            [
                [int(rows_fitted[rows[i]]), int(cols_fitted[cols[i]]), abs(values[i] - mu[i])]
                for i in range(rows.size)
            ],
        )
    _write_manifest(args, out, inputs, seed, started)


def _read_cells_csv(path):
    cells = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["row", "col"]:
            raise DataError(f"{path}: expected header starting with 'row,col'")
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            try:
                cells.append((int(record[0]), int(record[1])))
            except (ValueError, IndexError):
                raise DataError(f"{path}: line {lineno}: expected integer row,col") from None
    if not cells:
        raise DataError(f"{path}: no cells listed")
    return cells


# -- simulate ----------------------------------------------------------------


def _cmd_simulate(args):
    started = time.monotonic()
    seed = _resolve_seed(args)
    out = _prepare_out(args)
    design = SimDesign(
        n_rows=args.n,
        n_cols=args.p,
        k_true=args.k_true,
        tau=args.tau,
        noise_sd=args.noise_sd,
        mu_mean=args.mu_mean,
        mu_sd=args.mu_sd,
        n_replications=args.replications,
        seed=seed,
    )
    rules = [r.strip() for r in args.rules.split(",") if r.strip()]
    candidates = _parse_int_list(args.candidates) if args.candidates else None
    report = run_k_recovery(
        design,
        rules=rules,
        candidates=candidates,
        config=FpcaConfig(k=1, n_starts=args.starts),
        with_rmsep=args.rmsep,
        threads=args.threads,
    )
    _write_json(
        os.path.join(out, "simreport.json"),
        {
            "design": {
                "n_rows": design.n_rows,
                "n_cols": design.n_cols,
                "k_true": design.k_true,
                "tau": design.tau,
                "noise_sd": design.noise_sd,
                "mu_mean": design.mu_mean,
                "mu_sd": design.mu_sd,
                "n_replications": design.n_replications,
                "seed": design.seed,
            },
            "rules": report.rules,
            "candidates": report.candidates,
            "percent_correct": report.percent_correct,
            "mean_rmsep": report.mean_rmsep,
            "n_failed": report.n_failed,
            "records": report.records,
        },
    )
    header = ["replication"]
    header += [f"chosen_{rule}" for rule in report.rules]
    if args.rmsep:
        header += [f"rmsep_{rule}" for rule in report.rules]
    header.append("error")
    rows = []
    for rec in report.records:
        row = [rec["replication"]]
        row += [rec["chosen"].get(rule, "") for rule in report.rules]
        if args.rmsep:
            row += [
                rec.get("rmsep_hidden", {}).get(rule, float("nan"))
                for rule in report.rules
            ]
        row.append(rec["error"] or "")
        rows.append(row)
    _write_csv(os.path.join(out, "simreport.csv"), header, rows)
    _write_manifest(args, out, [], seed, started)


if __name__ == "__main__":
    main()
