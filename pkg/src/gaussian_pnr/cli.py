"""Command-line interface.

Every subcommand reads JSON (a file given by ``--input`` or standard input)
and writes JSON, except ``sample`` which writes a counts CSV. Floats are
written with 17 significant digits so doubles survive a round trip.

Input documents are recognized by their keys:

* a state: ``{"cov": [[...]], "disp": [...]}``
* normal parameters: ``{"triples": [{"lambda": 3.0, "k": 2, "d": 0.0}]}``
* a distribution: ``{"probs": [...], "tail_bound": 0.0}``
* a product of single-mode states for the oracle: ``{"modes": [{"nu": 1.0, "r": 0.3, "alpha": [0.5, 0.0]}]}``

Exit codes: 0 success, 1 unreadable or malformed input, 2 validation
failure, 3 numerical non-convergence. Set ``GAUSSIAN_PNR_LOG`` to a logging
level name (for example ``INFO``) for diagnostics on standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .decompositions import (
    DomainError,
    NormalParameters,
    diagonal_representative,
    normal_parameters,
    validate_normal_parameters,
)
from .fock_oracle import modes_from_diagonal_state, oracle_distribution
from .gaussian_core import GaussianState
from .inverse import InversionConfig, fit_normal_parameters, same_distribution
from .photon_stats import TAIL_EPS, PhotonDistribution, TruncationError, photon_distribution, sample_counts

logger = logging.getLogger("gaussian_pnr")

EXIT_OK = 0
EXIT_MALFORMED = 1
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3


class CliError(Exception):
    """Error carrying the process exit code."""

    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# --- serialization ---------------------------------------------------------------


def _format(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise CliError(f"cannot serialize non-finite value {x!r}", EXIT_NOT_CONVERGED)
        text = format(x, ".17g")
        # keep floats recognizable as floats
        return text if any(ch in text for ch in ".en") else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_format(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_format(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON text with floats at 17 significant digits."""
    return _format(obj) + "\n"


def _read_text(path: str | None) -> tuple[str, str]:
    if path is None or path == "-":
        return sys.stdin.read(), "<stdin>"
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read(), path
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_MALFORMED) from exc


def load_json(path: str | None):
    """Parse a JSON document; malformed input exits with code 1 and its position."""
    text, name = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{name}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                       EXIT_MALFORMED) from exc


def _write(text: str, path: str | None):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# --- input interpretation --------------------------------------------------------


def _require_dict(doc, what: str) -> dict:
    if not isinstance(doc, dict):
        raise CliError(f"expected a JSON object describing {what}", EXIT_INVALID)
    return doc


def _kind(doc) -> str:
    doc = _require_dict(doc, "a state, parameters or a distribution")
    if "cov" in doc:
        return "state"
    if "triples" in doc:
        return "params"
    if "probs" in doc:
        return "distribution"
    if isinstance(doc.get("modes"), list):
        return "oracle"
    raise CliError("input has none of the keys 'cov', 'triples', 'probs' or a 'modes' list", EXIT_INVALID)


def _as_state(doc) -> GaussianState:
    try:
        state = GaussianState.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"bad state: {exc}", EXIT_INVALID) from exc
    report = state.validate()
    if not report:
        raise CliError("unphysical state: " + "; ".join(report.messages), EXIT_INVALID)
    return state


def _as_params(doc, check: bool = True) -> NormalParameters:
    try:
        params = NormalParameters.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"bad normal parameters: {exc}", EXIT_INVALID) from exc
    if check:
        report = validate_normal_parameters(params)
        if not report:
            raise CliError("invalid normal parameters: " + "; ".join(report.messages), EXIT_INVALID)
    return params


def _as_distribution(doc) -> PhotonDistribution:
    try:
        dist = PhotonDistribution.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"bad distribution: {exc}", EXIT_INVALID) from exc
    p = dist.probs
    if not np.all(np.isfinite(p)) or p.min() < -1e-12 or math.fsum(p) > 1 + 1e-9:
        raise CliError("distribution must be finite, nonnegative and sum to at most 1", EXIT_INVALID)
    return dist


def _params_from(doc, cluster_tol: float | None = None) -> NormalParameters:
    kind = _kind(doc)
    if kind == "state":
        state = _as_state(doc)
        return normal_parameters(state) if cluster_tol is None else normal_parameters(state, cluster_tol)
    if kind == "params":
        return _as_params(doc)
    raise CliError(f"expected a state or normal parameters, got {kind}", EXIT_INVALID)


def _oracle_modes(doc) -> list:
    kind = _kind(doc)
    if kind == "oracle":
        modes = []
        for i, m in enumerate(doc["modes"]):
            try:
                alpha = m.get("alpha", [0.0, 0.0])
                alpha = complex(*alpha) if isinstance(alpha, list) else complex(alpha)
                modes.append((float(m.get("nu", 1.0)), float(m.get("r", 0.0)), alpha))
            except (AttributeError, TypeError, ValueError) as exc:
                raise CliError(f"bad oracle mode {i}: {exc}", EXIT_INVALID) from exc
            if not modes[-1][0] >= 1.0:
                raise CliError(f"oracle mode {i}: nu must be at least 1", EXIT_INVALID)
        return modes
    if kind == "params":
        state = diagonal_representative(_as_params(doc))
    elif kind == "state":
        state = _as_state(doc)
    else:
        raise CliError("oracle needs a mode list, a diagonal state or normal parameters", EXIT_INVALID)
    try:
        return modes_from_diagonal_state(state)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc


def _single_input(args):
    if len(args.input) > 1:
        raise CliError(f"{args.command} takes one --input", EXIT_INVALID)
    return load_json(args.input[0] if args.input else None)


# --- subcommands ---------------------------------------------------------------------


def cmd_forward(args):
    params = _params_from(_single_input(args))
    try:
        dist = photon_distribution(params, nmax=args.nmax, tail_eps=args.tail_eps)
    except TruncationError as exc:
        raise CliError(str(exc), EXIT_NOT_CONVERGED) from exc
    return dumps(dist.to_dict()), EXIT_OK


def cmd_invert(args):
    doc = _single_input(args)
    if _kind(doc) != "distribution":
        raise CliError("invert needs a distribution with a 'probs' list", EXIT_INVALID)
    dist = _as_distribution(doc)
    modes = args.modes if args.modes is not None else doc.get("modes")
    if modes is None or int(modes) < 1:
        raise CliError("invert needs the number of modes: pass --modes or a 'modes' entry", EXIT_INVALID)
    cfg = InversionConfig(max_components=args.max_components)
    if args.tol is not None:
        cfg = replace(cfg, fit_tolerance=args.tol)
    try:
        result = fit_normal_parameters(dist, int(modes), cfg)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc
    code = EXIT_OK if result.converged else EXIT_NOT_CONVERGED
    if not result.converged:
        logger.warning("fit did not converge: residual %.3e", result.residual)
    return dumps(result.to_dict()), code


def cmd_normal_params(args):
    doc = _single_input(args)
    if _kind(doc) != "state":
        raise CliError("normal-params needs a state with a 'cov' matrix", EXIT_INVALID)
    return dumps(normal_parameters(_as_state(doc)).to_dict()), EXIT_OK


def cmd_equivalent(args):
    if len(args.input) != 2:
        raise CliError("equivalent needs exactly two --input files", EXIT_INVALID)
    docs = [load_json(path) for path in args.input]
    tol = 1e-8 if args.tol is None else args.tol
    kinds = [_kind(d) for d in docs]
    if kinds == ["state", "state"]:
        a, b = (_as_state(d) for d in docs)
        same = same_distribution(a, b, tol=tol)
        params = [normal_parameters(a), normal_parameters(b)]
    else:
        params = [_params_from(d) for d in docs]
        same = params[0].modes == params[1].modes and params[0].allclose(params[1], rtol=tol, atol=tol)
    return dumps({"equivalent": bool(same), "params": [p.to_dict() for p in params]}), EXIT_OK


def cmd_sample(args):
    doc = _single_input(args)
    if _kind(doc) != "distribution":
        raise CliError("sample needs a distribution with a 'probs' list", EXIT_INVALID)
    dist = _as_distribution(doc)
    if args.samples is None or args.samples < 0:
        raise CliError("sample needs --samples N with N >= 0", EXIT_INVALID)
    counts = sample_counts(dist, args.samples, seed=args.seed)
    hist = np.bincount(counts, minlength=dist.probs.size)
    lines = ["n,count"] + [f"{n},{int(c)}" for n, c in enumerate(hist)]
    return "\n".join(lines) + "\n", EXIT_OK


def cmd_validate(args):
    doc = _single_input(args)
    kind = _kind(doc)
    if kind == "state":
        try:
            state = GaussianState.from_dict(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(f"bad state: {exc}", EXIT_INVALID) from exc
        rep = state.validate() if args.tol is None else state.validate(args.tol)
        out = {"kind": "state", "valid": bool(rep), "symmetric": rep.symmetric, "positive": rep.positive,
               "min_symplectic_eigenvalue": rep.min_symplectic_eigenvalue, "messages": list(rep.messages)}
    elif kind == "params":
        params = _as_params(doc, check=False)
        rep = validate_normal_parameters(params) if args.tol is None else validate_normal_parameters(params, args.tol)
        out = {"kind": "params", "valid": bool(rep), "positive": rep.positive, "even": rep.even,
               "pairing": rep.pairing, "messages": list(rep.messages)}
    else:
        raise CliError(f"validate needs a state or normal parameters, got {kind}", EXIT_INVALID)
    return dumps(out), EXIT_OK if out["valid"] else EXIT_INVALID


def cmd_representative(args):
    doc = _single_input(args)
    if _kind(doc) != "params":
        raise CliError("representative needs normal parameters with a 'triples' list", EXIT_INVALID)
    params = _as_params(doc)
    try:
        state = diagonal_representative(params)
    except DomainError as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc
    return dumps(state.to_dict()), EXIT_OK


def cmd_oracle(args):
    modes = _oracle_modes(_single_input(args))
    try:
        dist = oracle_distribution(modes, dim=args.fock_dim)
    except (RuntimeError, ValueError) as exc:
        raise CliError(str(exc), EXIT_NOT_CONVERGED) from exc
    return dumps(dist.to_dict()), EXIT_OK


COMMANDS = {
    "forward": (cmd_forward, "state or normal parameters -> photon-number distribution"),
    "invert": (cmd_invert, "distribution -> fitted normal parameters"),
    "normal-params": (cmd_normal_params, "state -> normal parameters"),
    "equivalent": (cmd_equivalent, "do two states give the same distribution"),
    "sample": (cmd_sample, "distribution -> sampled counts CSV"),
    "validate": (cmd_validate, "check a state or normal parameters"),
    "representative": (cmd_representative, "normal parameters -> diagonal representative state"),
    "oracle": (cmd_oracle, "product of single-mode states -> brute-force Fock distribution"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaussian-pnr",
                                     description="Photon-number statistics of multimode Gaussian states.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--input", action="append", default=[],
                       help="input JSON file ('-' or omitted: standard input); repeat for 'equivalent'")
        p.add_argument("--output", default=None, help="output file (default: standard output)")
        p.add_argument("--nmax", type=int, default=None, help="largest photon number to report")
        p.add_argument("--tail-eps", type=float, default=TAIL_EPS, help="tail mass target when --nmax is omitted")
        p.add_argument("--tol", type=float, default=None, help="tolerance of the fit or comparison")
        p.add_argument("--seed", type=int, default=None, help="random seed for 'sample'")
        p.add_argument("--samples", type=int, default=None, help="number of samples for 'sample'")
        p.add_argument("--max-components", type=int, default=None, help="component bound for 'invert'")
        p.add_argument("--modes", type=int, default=None, help="number of modes for 'invert'")
        p.add_argument("--fock-dim", type=int, default=None, help="Fock cutoff per mode for 'oracle'")
    return parser


def _configure_logging():
    level = os.environ.get("GAUSSIAN_PNR_LOG")
    if not level:
        return
    value = logging.getLevelName(level.upper())
    if not isinstance(value, int):
        value = logging.INFO
    logging.basicConfig(level=value, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def run(argv=None) -> int:
    """Run one subcommand and return its exit code."""
    _configure_logging()
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        text, code = func(args)
    except CliError as exc:
        print(f"gaussian-pnr {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except DomainError as exc:
        print(f"gaussian-pnr {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _write(text, args.output)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
