"""Command-line entry point: ``snsim budget|simulate|sweep|analyze|presets``.

Exit codes: 0 success, 2 invalid input, 3 fit did not converge (outputs are
still written).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .analysis import fit_lorentzian, fit_to_dict
from .config import (
    SWEEP_PRESETS,
    dump_config,
    list_presets,
    load_config,
    load_preset,
    load_sweep,
    load_sweep_preset,
    preset_description,
)
from .errors import SnsimError
from .experiment import run_simulation, run_sweep
from .quantum_optics import OpoBudget, lin_to_db, opo_noise, pump_parameter
from .spectral import read_spectrum_csv, write_spectrum_csv

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_CONVERGENCE = 3

log = logging.getLogger("snsim")


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
    return text


def _override(config, args):
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.averages is not None:
        if args.averages < 1:
            raise SnsimError("--averages must be >= 1")
        acq = dataclasses.replace(config.acquisition, n_averages=args.averages)
        config = dataclasses.replace(config, acquisition=acq)
    return config


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_result(out, prefix, result):
    xi2 = result.state.s2_var_rel_snl
    write_spectrum_csv(result.spectrum, out / f"{prefix}spectrum.csv",
                       comment=f"snsim spectrum; snl_psd={result.snl_psd!r}; xi2={xi2!r}")
    write_spectrum_csv(result.normalized, out / f"{prefix}spectrum_db.csv",
                       comment=f"snsim spectrum relative to SNL; snl_psd={result.snl_psd!r}")
    _dump_json(fit_to_dict(result.fit, result.peak_index), out / f"{prefix}fit.json")


def cmd_budget(args):
    x = args.x
    if args.pump_mw is not None:
        x = pump_parameter(args.pump_mw, args.threshold_mw)
    budget = OpoBudget(args.eta, args.epsilon, args.zeta, args.rho, x, args.omega)
    r_minus, r_plus = opo_noise(budget)
    report = {
        "x": x,
        "r_minus": r_minus,
        "r_plus": r_plus,
        "r_minus_db": lin_to_db(r_minus) if r_minus > 0 else None,
        "r_plus_db": lin_to_db(r_plus),
    }
    _dump_json(report, args.out)
    return EXIT_OK


def _load_experiment(args):
    if (args.config is None) == (args.preset is None):
        raise SnsimError("give exactly one of --config or --preset")
    if args.preset is not None:
        return load_preset(args.preset)
    return load_config(args.config)


def cmd_simulate(args):
    config = _override(_load_experiment(args), args)
    result = run_simulation(config, workers=args.workers)
    out = _outdir(args.out)
    dump_config(config, out / "config.json")
    _write_result(out, "", result)
    summary = {"snr_db": fit_to_dict(result.fit, result.peak_index)["snr_db"],
               "fwhm_khz": result.fwhm_khz, "converged": result.fit.converged}
    _dump_json(summary)
    return EXIT_OK if result.fit.converged else EXIT_NO_CONVERGENCE


def cmd_sweep(args):
    if (args.config is None) == (args.preset is None):
        raise SnsimError("give exactly one of --config or --preset")
    sweep_cfg = load_sweep_preset(args.preset) if args.preset else load_sweep(args.config)
    config = _override(sweep_cfg.experiment, args)
    result = run_sweep(config, sweep_cfg.sweep, workers=args.workers)
    out = _outdir(args.out)
    dump_config(dataclasses.replace(sweep_cfg, experiment=config), out / "config.json")
    converged = True
    for i, point in enumerate(result.points):
        pdir = _outdir(out / f"point_{i:03d}")
        dump_config(point.config, pdir / "config.json")
        _write_result(pdir, "pcs_", point.pcs)
        _write_result(pdir, "pss_", point.pss)
        converged &= point.pcs.fit.converged and point.pss.fit.converged
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("value", "snr_pcs_db", "snr_pss_db", "fwhm_pcs_khz", "fwhm_pss_khz"))
    for row in result.summary_rows():
        writer.writerow([repr(float(v)) for v in row])
    (out / "summary.csv").write_text(buf.getvalue())
    unit = "kHz/mW" if result.variable == "power" else "kHz/(1e11 cm^-3)"
    regression = {
        "variable": result.variable,
        "unit": unit,
        "pcs": dataclasses.asdict(result.regression_pcs),
        "pss": dataclasses.asdict(result.regression_pss),
    }
    _dump_json(regression, out / "regression.json")
    _dump_json(regression)
    return EXIT_OK if converged else EXIT_NO_CONVERGENCE


def cmd_analyze(args):
    spectrum = read_spectrum_csv(args.spectrum)
    fit = fit_lorentzian(spectrum, args.peaks)
    _dump_json(fit_to_dict(fit), args.out)
    return EXIT_OK if fit.converged else EXIT_NO_CONVERGENCE


def cmd_presets(args):
    for name in list_presets():
        kind = "sweep" if name in SWEEP_PRESETS else "simulate"
        print(f"{name:10s} {kind:8s} {preset_description(name)}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="snsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"snsim {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("budget", help="OPO squeezed/anti-squeezed noise")
    p.add_argument("--eta", type=float, default=0.94)
    p.add_argument("--epsilon", type=float, default=0.997)
    p.add_argument("--zeta", type=float, default=0.99)
    p.add_argument("--rho", type=float, default=0.966)
    p.add_argument("--x", type=float, default=0.63, help="pump parameter")
    p.add_argument("--omega", type=float, default=0.125)
    p.add_argument("--pump-mw", type=float, help="derive x from pump power instead of --x")
    p.add_argument("--threshold-mw", type=float, default=206.0)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_budget)

    def common(p):
        p.add_argument("--config", help="configuration JSON file")
        p.add_argument("--preset", help="bundled preset name")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--averages", type=int)
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("simulate", help="end-to-end simulation of one scenario")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="power or density sweep, coherent vs squeezed probe")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="fit Lorentzian lines to a spectrum CSV")
    p.add_argument("spectrum", help="spectrum CSV as written by 'simulate'")
    p.add_argument("--peaks", type=int, default=2, choices=(1, 2))
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("presets", help="list bundled presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SnsimError, ValueError) as exc:
        print(f"snsim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
