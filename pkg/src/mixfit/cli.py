"""Command-line interface: ``mixfit fit|sample|eval|select``.

Exit codes: 0 success, 2 unreadable or invalid input, 3 fit failure,
64 invalid flags.  Every failure prints one line starting with ``error:``
to standard error.
"""

import argparse
import json
import sys

import numpy as np

from . import __version__
from .distributions import Gaussian
from .errors import ConfigurationError, DataFormatError, DimensionError, MixfitError, ModelFileError
from .estimation import SOLVERS, FitOptions, StepSchedule, fit
from .io import fmt, load_model, read_csv, save_model, write_csv, write_trace
from .mixture import Mixture
from .selection import CRITERIA, CsmOptions, aic, bic, csm_fit

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_FIT = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_fit_options(p):
    p.add_argument("--solver", choices=SOLVERS, default="em")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=_positive_int, default=FitOptions.max_iters)
    p.add_argument("--tol-rel-ll", type=float, default=FitOptions.tol_rel_ll)
    p.add_argument("--tol-grad", type=float, default=FitOptions.tol_grad)
    p.add_argument("--lbfgs-memory", type=_positive_int, default=FitOptions.lbfgs_memory)
    p.add_argument("--batch-size", type=_positive_int, default=None)
    p.add_argument("--step", type=float, default=StepSchedule.c, help="step size constant c")
    p.add_argument("--step-decay", type=float, default=None, metavar="TAU",
                   help="use the decaying schedule c / (1 + t / TAU)")
    p.add_argument("--validation-fraction", type=float, default=0.0)
    p.add_argument("--patience", type=_positive_int, default=20)
    p.add_argument("--penalize", action="store_true")
    p.add_argument("--weights-column", type=int, default=None,
                   help="0-based CSV column holding per-datum weights")


def build_parser():
    parser = _Parser(prog="mixfit", description="Fit, sample and evaluate Gaussian mixture models.")
    parser.add_argument("--version", action="version", version=f"mixfit {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("fit", help="fit a mixture to CSV data")
    p.add_argument("data")
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None)
    _add_fit_options(p)

    p = sub.add_parser("sample", help="draw samples from a saved model")
    p.add_argument("model")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", action="store_true", help="append the component index column")

    p = sub.add_parser("eval", help="evaluate a saved model on CSV data")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--per-datum", default=None, metavar="CSV")
    p.add_argument("--weights-column", type=int, default=None)

    p = sub.add_parser("select", help="choose K by competitive split-and-merge")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    p.add_argument("--k-init", type=_positive_int, default=1)
    p.add_argument("--k-min", type=_positive_int, default=1)
    p.add_argument("--k-max", type=_positive_int, default=10)
    p.add_argument("--criterion", choices=CRITERIA, default="bic")
    p.add_argument("--candidates", type=_positive_int, default=3)
    p.add_argument("--max-rounds", type=int, default=30)
    p.add_argument("--trace", default=None)
    _add_fit_options(p)
    return parser


def _fit_options(args):
    schedule = StepSchedule(args.step, args.step_decay)
    opts = FitOptions(
        solver=args.solver,
        max_iters=args.max_iters,
        tol_rel_ll=args.tol_rel_ll,
        tol_grad=args.tol_grad,
        lbfgs_memory=args.lbfgs_memory,
        batch_size=args.batch_size,
        step_schedule=schedule,
        validation_fraction=args.validation_fraction,
        patience=args.patience,
        penalize=args.penalize,
        seed=args.seed,
    )
    try:
        return opts.validate()
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from None


def _metadata(mixture, theta, data, args):
    ll = mixture.ll(theta, data)
    k = mixture.num_free_params
    return ll, {
        "solver": args.solver,
        "seed": args.seed,
        "final_ll": ll,
        "aic": aic(ll, k, data.n).value,
        "bic": bic(ll, k, data.n).value,
    }


def _summary(ll, data, report):
    return {
        "final_ll": ll,
        "per_datum_ll": ll / data.n,
        "iterations": report.iters,
        "reason": report.reason,
        "k": report.theta_hat.k,
    }


def _print_json(obj):
    print(json.dumps(obj, sort_keys=False))


def cmd_fit(args):
    options = _fit_options(args)
    data = read_csv(args.data, args.weights_column)
    if options.batch_size is not None and options.batch_size > data.n:
        raise UsageError(f"--batch-size {options.batch_size} exceeds N={data.n}")
    mixture = Mixture(Gaussian(data.d), args.k)
    try:
        report = fit(mixture, data, options)
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from None
    except (MixfitError, np.linalg.LinAlgError) as exc:
        raise _FitFailure(str(exc)) from None
    ll, meta = _metadata(mixture, report.theta_hat, data, args)
    save_model(args.out, report.theta_hat, meta)
    if args.trace:
        write_trace(args.trace, report.ll_trace, report.val_trace)
    _print_json(_summary(ll, data, report))
    return EXIT_OK


def cmd_sample(args):
    theta, _ = load_model(args.model)
    mixture = Mixture(Gaussian(theta.d), theta.k)
    rng = np.random.default_rng(args.seed)
    batch, labels = mixture.sample(theta, args.n, rng, return_labels=True)
    write_csv(args.out, batch.matrix, labels if args.labels else None)
    return EXIT_OK


def cmd_eval(args):
    theta, _ = load_model(args.model)
    data = read_csv(args.data, args.weights_column)
    if data.d != theta.d:
        raise DimensionError(f"data has {data.d} columns, model has d={theta.d}")
    mixture = Mixture(Gaussian(theta.d), theta.k)
    llvec = mixture.llvec(theta, data)
    ll = mixture.ll(theta, data)
    k = mixture.num_free_params
    _print_json({
        "ll": ll,
        "mean_ll": ll / data.n,
        "aic": aic(ll, k, data.n).value,
        "bic": bic(ll, k, data.n).value,
        "n": data.n,
    })
    if args.per_datum:
        with open(args.per_datum, "w") as fh:
            for v in llvec:
                fh.write(fmt(v) + "\n")
    return EXIT_OK


def cmd_select(args):
    if args.k_min > args.k_max:
        raise UsageError(f"--k-min {args.k_min} exceeds --k-max {args.k_max}")
    if args.max_rounds < 0:
        raise UsageError("--max-rounds must be nonnegative")
    inner = _fit_options(args)
    data = read_csv(args.data, args.weights_column)
    options = CsmOptions(
        k_init=args.k_init, k_min=args.k_min, k_max=args.k_max, criterion=args.criterion,
        candidates_per_round=args.candidates, inner=inner, max_rounds=args.max_rounds,
    )
    try:
        options.validate()
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from None
    try:
        result = csm_fit(Gaussian(data.d), data, options)
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from None
    except (MixfitError, np.linalg.LinAlgError) as exc:
        raise _FitFailure(str(exc)) from None
    for entry in result.log:
        _print_json(entry)
    theta = result.report.theta_hat
    ll, meta = _metadata(result.mixture, theta, data, args)
    save_model(args.out, theta, meta)
    if args.trace:
        write_trace(args.trace, result.report.ll_trace, result.report.val_trace)
    summary = _summary(ll, data, result.report)
    summary["criterion"] = args.criterion
    summary["criterion_value"] = result.criterion
    _print_json(summary)
    return EXIT_OK


class _FitFailure(Exception):
    pass


COMMANDS = {"fit": cmd_fit, "sample": cmd_sample, "eval": cmd_eval, "select": cmd_select}


def _fail(code, message):
    message = " ".join(str(message).split())
    print(f"error: {message}", file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except _FitFailure as exc:
        return _fail(EXIT_FIT, exc)
    except (DataFormatError, ModelFileError, DimensionError) as exc:
        return _fail(EXIT_INPUT, exc)
    except OSError as exc:
        return _fail(EXIT_INPUT, f"{exc.filename or ''}: {exc.strerror or exc}")


if __name__ == "__main__":
    sys.exit(main())
