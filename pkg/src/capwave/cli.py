"""Command-line front end: one flat config file drives every subcommand.

Config files are line-oriented `key = value` text. `#` starts a comment,
blank lines are skipped, list values are whitespace-separated, and unknown
or duplicate keys are hard errors, so a typo cannot silently fall back to a
default. Exit codes: 0 on success, 2 for any configuration problem, 3 when
the kernel optimization fails numerically.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .experiments import (
    ExperimentConfig,
    build_model,
    export_spectra,
    run_table,
    run_tsvd_table,
    write_table,
)
from .harmonics import save_coefficients
from .kernels import (
    NumericalFailure,
    PenaltyWeights,
    gram_scalar,
    gram_vector,
    optimize,
    save_pair_csv,
    shannon_pair,
    tsvd_symbols,
)
from .transforms import NoiseSpec, add_noise, approximate_coefficients, \
    relative_error, upward_continue

__all__ = ["ConfigError", "parse_config", "load_config", "main"]


class ConfigError(ValueError):
    """Raised for malformed config text or inconsistent key values."""


# ---------------------------------------------------------------------------
# config file parsing


def _parse_float(text: str) -> float:
    return float(text)


def _parse_int(text: str) -> int:
    return int(text)


def _parse_str(text: str) -> str:
    return text


def _parse_float_list(text: str) -> tuple[float, ...]:
    items = text.split()
    if not items:
        raise ValueError("expected at least one value")
    return tuple(float(x) for x in items)


def _parse_int_list(text: str) -> tuple[int, ...]:
    items = text.split()
    if not items:
        raise ValueError("expected at least one value")
    return tuple(int(x) for x in items)


def _parse_center(text: str) -> tuple[float, float, float]:
    items = text.split()
    if len(items) != 3:
        raise ValueError("region_center needs exactly three components")
    return tuple(float(x) for x in items)


_PARSERS = {
    "case": _parse_str,
    "r_km": _parse_float,
    "R_km": _parse_float,
    "scaling_degree": _parse_int,
    "kappa": _parse_float,
    "kernel_rho": _parse_float,
    "region_center": _parse_center,
    "region_rho": _parse_float,
    "model_file": _parse_str,
    "model_degree": _parse_int,
    "model_seed": _parse_int,
    "noise_degree": _parse_int,
    "beta": _parse_float_list,
    "alpha_tilde": _parse_float_list,
    "alpha_ratio": _parse_float_list,
    "epsilon1": _parse_float_list,
    "gamma": _parse_float_list,
    "seeds": _parse_int_list,
    "shannon_degrees": _parse_int_list,
    "tsvd_degrees": _parse_int_list,
    "out": _parse_str,
}


def parse_config(text: str) -> ExperimentConfig:
    """Config object from `key = value` text; unknown keys are rejected."""
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected `key = value`")
        key = key.strip()
        value = value.strip()
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in kwargs:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        try:
            kwargs[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for '{key}': {exc}") from exc
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------------------
# subcommands


def _single(values, name: str, command: str):
    if len(values) != 1:
        raise ConfigError(
            f"the {command} command needs exactly one {name} value, "
            f"got {len(values)}"
        )
    return values[0]


def _single_weights(config: ExperimentConfig, command: str) -> PenaltyWeights:
    beta = _single(config.beta, "beta", command)
    alpha_tilde = _single(config.alpha_tilde, "alpha_tilde", command)
    ratio = _single(config.alpha_ratio, "alpha_ratio", command)
    return PenaltyWeights.uniform(
        config.geometry, alpha_tilde / ratio, alpha_tilde, beta)


def _require_scalar(config: ExperimentConfig, command: str) -> None:
    if config.case != "scalar":
        raise ConfigError(f"the {command} command covers the scalar chain only")


def _cmd_gram(config: ExperimentConfig) -> int:
    geometry = config.geometry
    builder = gram_scalar if config.case == "scalar" else gram_vector
    gram = builder(geometry.kN, geometry.rho)
    with open(config.out, "w", encoding="ascii", newline="") as fh:
        fh.write("n,m,value\n")
        for n in range(gram.n_max + 1):
            for m in range(gram.n_max + 1):
                fh.write(f"{n},{m},{gram.entries[n, m]:.17g}\n")
    print(f"wrote {(gram.n_max + 1) ** 2} gram entries to {config.out}")
    return 0


def _cmd_optimize(config: ExperimentConfig) -> int:
    pair = optimize(config.geometry, _single_weights(config, "optimize"))
    save_pair_csv(pair, config.out)
    print(f"wrote optimized kernel pair to {config.out}")
    return 0


def _cmd_shannon(config: ExperimentConfig) -> int:
    save_pair_csv(shannon_pair(config.geometry), config.out)
    print(f"wrote Shannon kernel pair to {config.out}")
    return 0


def _cmd_tsvd(config: ExperimentConfig) -> int:
    M = _single(config.tsvd_degrees, "tsvd_degrees", "tsvd")
    symbols = tsvd_symbols(config.geometry, M)
    with open(config.out, "w", encoding="ascii", newline="") as fh:
        fh.write("n,value\n")
        for n in range(symbols.n_max + 1):
            fh.write(f"{n},{symbols.values[n]:.17g}\n")
    print(f"wrote truncation symbols up to degree {M} to {config.out}")
    return 0


def _cmd_approximate(config: ExperimentConfig) -> int:
    _require_scalar(config, "approximate")
    eps1 = _single(config.epsilon1, "epsilon1", "approximate")
    gamma = _single(config.gamma, "gamma", "approximate")
    seed = _single(config.seeds, "seeds", "approximate")
    geometry = config.geometry
    region = config.region
    model = build_model(config)
    spec = NoiseSpec(eps1, gamma * eps1, config.noise_degree, seed)
    f1 = add_noise(upward_continue(model, geometry.R), spec, "sphere")
    f2 = add_noise(model, spec, region)
    pair = optimize(geometry, _single_weights(config, "approximate"))
    u = approximate_coefficients(pair, f1, f2, region)
    save_coefficients(u, config.out)
    err = relative_error(model, u, region)
    print(f"wrote approximation coefficients to {config.out}")
    print(f"relative_error = {err:.17g}")
    return 0


def _cmd_table(config: ExperimentConfig) -> int:
    rows = run_table(config)
    write_table(rows, config.out)
    print(f"wrote {len(rows)} rows to {config.out}")
    return 0


def _cmd_tsvd_table(config: ExperimentConfig) -> int:
    rows = run_tsvd_table(config)
    write_table(rows, config.out)
    print(f"wrote {len(rows)} rows to {config.out}")
    return 0


def _cmd_spectra(config: ExperimentConfig) -> int:
    pair = optimize(config.geometry, _single_weights(config, "spectra"))
    export_spectra(pair, config.out)
    print(f"wrote kernel spectra to {config.out}")
    return 0


_COMMANDS = {
    "gram": _cmd_gram,
    "optimize": _cmd_optimize,
    "shannon": _cmd_shannon,
    "tsvd": _cmd_tsvd,
    "approximate": _cmd_approximate,
    "table": _cmd_table,
    "tsvd-table": _cmd_tsvd_table,
    "spectra": _cmd_spectra,
}

_HELP = {
    "gram": "write the cap-exterior Gram matrix of the configured geometry",
    "optimize": "solve for one optimized kernel pair and write its symbols",
    "shannon": "write the Shannon reference pair for the configured geometry",
    "tsvd": "write hard-truncation inversion symbols for one cut-off degree",
    "approximate": "run one noisy reconstruction and write its coefficients",
    "table": "sweep noise cells and methods, write the comparison table",
    "tsvd-table": "sweep satellite-only truncation errors, write the table",
    "spectra": "optimize one pair and write its degree-wise spectra",
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="capwave",
        description="two-step reconstruction of a harmonic field from "
                    "outer-sphere and cap-local data",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in _HELP.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to a `key = value` config file")
        p.add_argument("--seed", type=int, default=None,
                       help="replace the configured seeds list with one seed")
        p.add_argument("--out", default=None,
                       help="override the configured output path")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = replace(config, seeds=(args.seed,))
        if args.out is not None:
            config = replace(config, out=args.out)
        return _COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
