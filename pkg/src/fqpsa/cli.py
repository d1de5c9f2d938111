"""Command-line entry point: ``fqpsa run | sweep | selftest``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .channel import McsTable
from .dualsolve import ResourceBudget
from .report import plot_sweep, run_rows, sweep_rows, to_csv, to_text
from .selftest import run_selftest
from .simkit import AXES, SCHEDULERS, ScenarioConfig, run_scenario, sweep

log = logging.getLogger("fqpsa")


class ConfigError(ValueError):
    pass


def _int(text):
    return int(text)


def _float(text):
    return float(text)


def _bool(text):
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _floats(text):
    vals = tuple(float(v) for v in text.replace(",", " ").split())
    if not vals:
        raise ValueError(text)
    return vals


def _optional(conv):
    def parse(text):
        return None if text.lower() in ("none", "off") else conv(text)
    parse.__name__ = conv.__name__
    return parse


def _str(text):
    return text


# key -> (parser, type description)
KEYS = {
    "voice_users": (_int, "an integer"),
    "video_users": (_int, "an integer"),
    "data_users": (_int, "an integer"),
    "distances": (_floats, "a comma-separated list of meters"),
    "total_power": (_float, "a number (W)"),
    "total_bandwidth": (_float, "a number (Hz)"),
    "frame_len": (_float, "a number (s)"),
    "frames": (_int, "an integer"),
    "warmup": (_float, "a number (s)"),
    "seed": (_int, "an integer"),
    "scheduler": (_str, "fqpsa or mlwdf"),
    "noise_psd_dbm_hz": (_float, "a number (dBm/Hz)"),
    "snr_gap": (_float, "a number"),
    "shadow_mean_db": (_float, "a number (dB)"),
    "shadow_sigma_db": (_float, "a number (dB)"),
    "fast_coherence": (_float, "a number (s)"),
    "slow_coherence": (_float, "a number (s)"),
    "quantize": (_bool, "on or off"),
    "mcs_file": (_str, "a path"),
    "alpha": (_float, "a number"),
    "init_rate": (_float, "a number (nats/s)"),
    "rt_cap": (_optional(_int), "an integer or none"),
    "n_sub": (_int, "an integer"),
    "voice_activity": (_float, "a number"),
    "mlwdf_per_subchannel": (_bool, "on or off"),
    "relative_channel": (_bool, "on or off"),
    "fade_threshold": (_float, "a number"),
    "burst_fraction": (_float, "a number"),
    "due_fraction": (_float, "a number"),
    "rt_power_share": (_optional(_float), "a number or none"),
}

_PROP_KEYS = {"snr_gap", "shadow_mean_db", "shadow_sigma_db", "fast_coherence", "slow_coherence"}
_POLICY_KEYS = {"fade_threshold", "burst_fraction", "due_fraction"}


def _parse_pairs(text: str, where: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where} line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        yield lineno, key, value


def _convert(key: str, value: str, origin: str):
    if key not in KEYS:
        raise ConfigError(f"{origin}: unknown key {key!r}; valid keys: {', '.join(sorted(KEYS))}")
    conv, kind = KEYS[key]
    try:
        return conv(value)
    except ValueError:
        raise ConfigError(f"{origin}: {key} expects {kind}, got {value!r}") from None


def build_config(values: dict) -> ScenarioConfig:
    """ScenarioConfig from already converted flat values; validated."""
    base = ScenarioConfig()
    prop, policy, top = {}, {}, {}
    for key, v in values.items():
        if key in _PROP_KEYS:
            prop[key] = v
        elif key in _POLICY_KEYS:
            policy[key] = v
        elif key == "noise_psd_dbm_hz":
            prop["noise_psd"] = 10.0 ** ((v - 30.0) / 10.0)
        elif key in ("total_power", "total_bandwidth", "mcs_file"):
            pass
        else:
            top[key] = v
    try:
        if "mcs_file" in values:
            top["mcs"] = McsTable.load(values["mcs_file"])
        top["budget"] = ResourceBudget(values.get("total_power", base.budget.total_power),
                                       values.get("total_bandwidth", base.budget.total_bandwidth))
        if prop:
            top["propagation"] = replace(base.propagation, **prop)
        if policy:
            top["rt_policy"] = replace(base.rt_policy, **policy)
        cfg = replace(base, **top)
        return cfg.validate()
    except (ValueError, OSError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def parse_config(text: str, overrides=()) -> ScenarioConfig:
    """Flat ``key = value`` text (``#`` comments) plus ``key=value`` overrides.

    Unspecified keys keep their defaults; overrides are applied last.
    """
    values = {}
    for lineno, key, value in _parse_pairs(text, "config"):
        values[key] = _convert(key, value, f"config line {lineno}")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        values[key] = _convert(key, value, f"--set {item}")
    return build_config(values)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fqpsa", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="flat key = value config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
        sp.add_argument("--quantize", choices=("on", "off"), help="MCS rate quantization")

    run = sub.add_parser("run", help="simulate one scenario")
    common(run)
    run.add_argument("--scheduler", choices=SCHEDULERS + ("both",))

    sw = sub.add_parser("sweep", help="vary one user count for both schedulers")
    common(sw)
    sw.add_argument("--axis", choices=sorted(AXES), required=True)
    sw.add_argument("--values", required=True, help="comma-separated user counts")
    sw.add_argument("--scheduler", choices=SCHEDULERS + ("both",), default="both")
    sw.add_argument("--figures", action="store_true",
                    help="also write PNG figures next to --out")

    st = sub.add_parser("selftest", help="randomized solver invariant checks")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--instances", type=int, default=1000)
    return p


def _load(args) -> ScenarioConfig:
    text = ""
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.quantize is not None:
        overrides.append(f"quantize={args.quantize}")
    return parse_config(text, overrides)


def _emit(args, header, rows):
    csv_text = to_csv(header, rows)
    if args.out is None:
        sys.stdout.write(csv_text)
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(csv_text)
        sys.stdout.write(to_text(header, rows))


def _schedulers(choice, default):
    if choice is None:
        return (default,)
    return SCHEDULERS if choice == "both" else (choice,)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "selftest":
            if args.instances < 1:
                raise ConfigError("--instances must be at least 1")
            families, elapsed = run_selftest(args.instances, args.seed)
            for fam in families.values():
                print(fam.line())
                for idx, val in fam.failures:
                    print(f"    instance {idx}: {val}", file=sys.stderr)
            ok = all(f.passed for f in families.values())
            print(f"{'PASS' if ok else 'FAIL'} selftest: {args.instances} instances, "
                  f"seed {args.seed}, {elapsed:.1f} s")
            return 0 if ok else 1

        cfg = _load(args)
        if args.command == "run":
            reports = [run_scenario(replace(cfg, scheduler=s))
                       for s in _schedulers(args.scheduler, cfg.scheduler)]
            _emit(args, *run_rows(reports))
            return 0

        try:
            values = [int(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--values expects comma-separated integers, got {args.values!r}") from None
        if args.figures and args.out is None:
            raise ConfigError("--figures needs --out to place the images")
        try:
            table = sweep(cfg, args.axis, values, _schedulers(args.scheduler, None))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        _emit(args, *sweep_rows(table))
        if args.figures:
            for path in plot_sweep(table, args.out):
                log.info("wrote %s", path)
        return 0
    except ConfigError as exc:
        print(f"fqpsa: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report, never traceback to the user
        print(f"fqpsa: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
