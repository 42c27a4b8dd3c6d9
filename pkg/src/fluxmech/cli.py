"""Command-line front end.

Every subcommand reads a YAML config (frequencies and rates in Hz), validates
it before computing anything, evaluates its grid with a worker pool and
writes CSV files plus a ``manifest.json`` into the output directory.

Exit codes: 0 success, 2 configuration error, 3 numerical failure budget
exceeded (or an unrecoverable numerical error). Errors are also printed to
stderr as one line of JSON.
"""

import argparse
import copy
import json
import logging
import math
import os
from pathlib import Path
import sys
from types import SimpleNamespace
import warnings

import numpy as np

from . import __version__
from .errors import ConfigError, FluxmechError
from .io import config_hash, load_yaml, read_csv, write_csv, write_json, write_manifest
from .sweep import FailureBudgetExceeded, grid_points, run_grid

log = logging.getLogger("fluxmech")

TWO_PI = 2 * math.pi
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
ENV_OUT = "FLUXMECH_OUT"
ENV_WORKERS = "FLUXMECH_WORKERS"
# keys that control execution but not numerics; excluded from the config hash
RUNTIME_KEYS = ("out", "workers", "resume", "checkpoint_every", "plot")


# ---------------------------------------------------------------------------
# config helpers

def _need(cfg, key, where=""):
    if key not in cfg:
        raise ConfigError("missing required key", field=f"{where}{key}")
    return cfg[key]


def _number(value, field):
    if isinstance(value, str):
        # YAML 1.1 reads exponents without a sign (5.8e9) as strings
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"expected a number, got {value!r}", field=field) from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=field)
    if not math.isfinite(value):
        raise ConfigError("must be finite", field=field)
    return float(value)


def _rate(cfg, key, where="", default=None):
    """Read ``<key>`` in Hz and return rad/s."""
    if key not in cfg:
        if default is None:
            raise ConfigError("missing required key", field=f"{where}{key}")
        return default
    return TWO_PI * _number(cfg[key], f"{where}{key}")


def parse_axis(spec, field):
    """A list of values, a single number, or ``{start, stop, num[, log]}``."""
    if isinstance(spec, (int, float, str)) and not isinstance(spec, bool):
        return np.array([_number(spec, field)])
    if isinstance(spec, list):
        if not spec:
            raise ConfigError("grid axis is empty", field=field)
        return np.array([_number(v, field) for v in spec])
    if isinstance(spec, dict):
        start = _number(_need(spec, "start", field + "."), field + ".start")
        stop = _number(_need(spec, "stop", field + "."), field + ".stop")
        num = spec.get("num", 1)
        if isinstance(num, bool) or not isinstance(num, int) or num < 1:
            raise ConfigError("num must be a positive integer", field=field + ".num")
        if spec.get("log", False):
            if start <= 0 or stop <= 0:
                raise ConfigError("log axis needs positive bounds", field=field)
            return np.geomspace(start, stop, num)
        return np.linspace(start, stop, num)
    raise ConfigError(f"cannot parse grid axis {spec!r}", field=field)


def _device(cfg):
    from .device import PRESETS, device_from_mapping, load_device

    spec = cfg.get("device", "device-1")
    if isinstance(spec, str):
        if spec in PRESETS:
            return PRESETS[spec]
        path = Path(spec)
        if not path.exists():
            raise ConfigError(f"device file not found: {spec}", field="device")
        return load_device(path)
    return device_from_mapping(spec)


def _flux(cfg, device):
    """Operating point: ``phi_ratio``, ``transmon_frequency_hz`` or ``resonant: true``."""
    from .device import FluxPoint
    from .spectrum import flux_for_transmon_frequency

    op = cfg.get("operating_point", {"resonant": True})
    if not isinstance(op, dict):
        raise ConfigError("must be a mapping", field="operating_point")
    b_par = _number(op.get("b_par_T", 0.0), "operating_point.b_par_T")
    if "phi_ratio" in op:
        phi = _number(op["phi_ratio"], "operating_point.phi_ratio")
    elif "transmon_frequency_hz" in op:
        wq = TWO_PI * _number(op["transmon_frequency_hz"], "operating_point.transmon_frequency_hz")
        try:
            phi = float(flux_for_transmon_frequency(device, wq))
        except ValueError as exc:
            raise ConfigError(str(exc), field="operating_point.transmon_frequency_hz") from None
    elif op.get("resonant", False):
        phi = float(flux_for_transmon_frequency(device, device.omega_c))
    else:
        raise ConfigError("give phi_ratio, transmon_frequency_hz or resonant: true",
                          field="operating_point")
    return FluxPoint(phi, b_par)


def _mode(cfg):
    """Kerr-mode block; ``from_device: true`` fills gaps from the device spectrum."""
    from .backaction import KerrModeConfig

    m = cfg.get("mode")
    if not isinstance(m, dict):
        raise ConfigError("missing or invalid mode block", field="mode")
    values = {}
    if m.get("from_device", False):
        from .spectrum import polariton_spectrum

        device = _device(cfg)
        flux = _flux(cfg, device)
        spec = polariton_spectrum(device, flux, labels=("plus",))
        values = dict(omega_plus=spec.frequency("plus"), kerr_plus=spec.kerr_plus,
                      kappa=device.kappa_b, g_plus=spec.couplings["plus"],
                      omega_m=device.omega_m, gamma_m=device.gamma_m)
    keys = {"omega_plus_hz": "omega_plus", "kerr_hz": "kerr_plus", "kappa_hz": "kappa",
            "g_hz": "g_plus", "omega_m_hz": "omega_m", "gamma_m_hz": "gamma_m"}
    for file_key, attr in keys.items():
        if file_key in m:
            values[attr] = TWO_PI * _number(m[file_key], f"mode.{file_key}")
        elif attr not in values:
            raise ConfigError("missing required key", field=f"mode.{file_key}")
    try:
        return KerrModeConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc), field="mode") from None


def _atten(cfg):
    if "atten_product" in cfg:
        v = _number(cfg["atten_product"], "atten_product")
        if v <= 0:
            raise ConfigError("must be positive", field="atten_product")
        return v
    return _device(cfg).atten_product


def _drive_axis(grid, omega_of, atten, field="grid"):
    """Drive amplitudes from ``power_dBm`` (needs ``atten``) or ``epsilon_hz`` axes.

    Returns ``(label, values, to_eps)`` where ``to_eps(value, omega_d)`` gives rad/s.
    """
    from .backaction import power_to_epsilon

    if "power_dBm" in grid:
        vals = parse_axis(grid["power_dBm"], f"{field}.power_dBm")
        return "power_dBm", vals, lambda p, wd: float(power_to_epsilon(p, wd, atten))
    if "epsilon_hz" in grid:
        vals = parse_axis(grid["epsilon_hz"], f"{field}.epsilon_hz")
        if np.any(vals < 0):
            raise ConfigError("drive amplitudes must be non-negative", field=f"{field}.epsilon_hz")
        return "epsilon_Hz", vals, lambda e, wd: TWO_PI * float(e)
    raise ConfigError("grid needs power_dBm or epsilon_hz", field=field)


# ---------------------------------------------------------------------------
# per-point workers (top level so they pickle)

def _pt_spectrum(pt):
    from .spectrum import TRANSITIONS, transition_frequencies, diagonalize, build_hamiltonian

    spec = diagonalize(build_hamiltonian(pt["device"], pt["flux"]))
    freqs = dict(transition_frequencies(spec))
    out = {f"{k}_Hz": freqs[k] / TWO_PI for k in TRANSITIONS}
    if pt.get("lindblad") is not None:
        from .lindblad import lindblad_transmission

        lcfg, grid = pt["lindblad"]
        out["s21"] = lindblad_transmission(pt["device"], pt["flux"], lcfg, grid).tolist()
    return out


def _pt_backaction(pt):
    from .backaction import DriveSpec, mechanical_response_for_n, select_branch, steady_state

    cfg = pt["mode"]
    drive = DriveSpec(omega_d=cfg.omega_plus + pt["det"], epsilon=pt["eps"])
    states = steady_state(cfg, drive)
    st = select_branch(states, pt.get("branch", "low"))
    Gm, dw = mechanical_response_for_n(cfg, pt["det"], st.n)
    Gm, dw = float(Gm), float(dw)
    return {"n_d": st.n, "Gamma_m_Hz": Gm / TWO_PI, "delta_omega_m_Hz": dw / TWO_PI,
            "n_branches": len(states), "optically_stable": st.optically_stable,
            "stable_flag": bool(st.optically_stable and Gm > 0)}


def _pt_fixed(pt):
    from .semiclassical import region_point

    n_fp, n_st, mech = region_point(pt["params"], pt["wd"], pt["eps"], pt.get("n_scan", 4001))
    return {"n_fp": n_fp, "n_stable": n_st, "mech_unstable": bool(mech)}


def _pt_polariton(pt):
    from .polariton_tls import tls_unstable

    bits, errors = 0, []
    for k, tls in enumerate(pt["transitions"]):
        if tls.thermal_weight == 0.0:
            continue
        if tls_unstable(tls, pt["wd"], pt["eps"]):
            bits |= 1 << k
    return {"unstable": bits > 0, "which_transitions": bits}


def _pt_fit(pt):
    from .ceqa import fit_g

    r = fit_g(pt["delta"], pt["magnitude"], pt["model"], pt["base"], pt["pp"],
              noise=pt.get("noise", "additive"))
    return r.to_dict()


# ---------------------------------------------------------------------------
# run context

class Run:
    """Holds resolved runtime settings and writes the outputs of one command."""

    def __init__(self, command, config, args):
        self.command = command
        self.config = config
        out = args.out or os.environ.get(ENV_OUT) or config.get("out") or "out"
        self.out = Path(out)
        workers = args.workers
        if workers is None and os.environ.get(ENV_WORKERS):
            try:
                workers = int(os.environ[ENV_WORKERS])
            except ValueError:
                raise ConfigError("must be an integer", field=ENV_WORKERS) from None
        if workers is None:
            workers = config.get("workers", 1)
        if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
            raise ConfigError("workers must be a positive integer", field="workers")
        self.workers = workers
        self.resume = bool(args.resume)
        self.seed = args.seed if args.seed is not None else config.get("seed", 0)
        self.checkpoint_every = int(config.get("checkpoint_every", 50))
        self.max_fail = float(config.get("max_failure_fraction", 0.1))
        numeric = {k: v for k, v in config.items() if k not in RUNTIME_KEYS}
        numeric["seed"] = self.seed
        self.numeric_config = numeric
        self.hash = config_hash({"command": command, "config": numeric})
        self.files = []

    @property
    def meta(self):
        return {"command": self.command, "config_hash": self.hash, "version": __version__}

    def grid(self, func, points):
        ckpt = self.out / f"{self.command}.checkpoint.jsonl"
        results, errors = run_grid(func, points, workers=self.workers, checkpoint=ckpt,
                                   checkpoint_every=self.checkpoint_every, resume=self.resume,
                                   max_failure_fraction=self.max_fail)
        if ckpt.exists():
            ckpt.unlink()
        return results, errors

    def csv(self, name, columns, extra_meta=None):
        meta = dict(self.meta)
        meta.update(extra_meta or {})
        path = write_csv(self.out / name, columns, meta)
        self.files.append(path)
        return path

    def json(self, name, obj):
        payload = dict(obj)
        payload.setdefault("config_hash", self.hash)
        path = write_json(self.out / name, payload)
        self.files.append(path)
        return path

    def finish(self, extra=None):
        write_manifest(self.out / "manifest.json", self.command,
                       {"command": self.command, "config": self.numeric_config}, self.files, extra)
        if self.config.get("plot", False):
            self._plots()

    def _plots(self):
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            warnings.warn("plot requested but matplotlib is not installed", RuntimeWarning)
            return
        for path in list(self.files):
            if path.suffix != ".csv":
                continue
            _, cols = read_csv(path)
            names = list(cols)
            if len(names) < 3:
                continue
            x, y, z = names[1], names[0], names[2]
            xs, ys = np.unique(cols[x]), np.unique(cols[y])
            if xs.size * ys.size != len(cols[z]) or xs.size < 2 or ys.size < 2:
                continue
            try:
                Z = np.asarray(cols[z], dtype=float).reshape(ys.size, xs.size)
            except (TypeError, ValueError):
                continue
            fig, ax = plt.subplots(figsize=(6, 4))
            mesh = ax.pcolormesh(xs, ys, Z, shading="nearest")
            fig.colorbar(mesh, ax=ax, label=z)
            ax.set_xlabel(x)
            ax.set_ylabel(y)
            fig.tight_layout()
            fig.savefig(path.with_suffix(".svg"))
            plt.close(fig)


def _hole_meta(errors):
    return {"holes": sum(e is not None for e in errors)}


def _col(results, key, fill=float("nan")):
    return [fill if r is None else r[key] for r in results]


# ---------------------------------------------------------------------------
# commands

def cmd_spectrum(run):
    cfg = run.config
    from .device import FluxPoint
    from .spectrum import TRANSITIONS

    device = _device(cfg)
    grid = _need(cfg, "grid")
    fluxes = parse_axis(_need(grid, "flux", "grid."), "grid.flux")
    b_par = _number(cfg.get("b_par_T", 0.0), "b_par_T")
    lind = None
    if "lindblad" in cfg:
        from .lindblad import LindbladConfig

        L = cfg["lindblad"]
        freq = TWO_PI * parse_axis(_need(L, "freq_hz", "lindblad."), "lindblad.freq_hz")
        try:
            lcfg = LindbladConfig(
                dim_cavity=int(L.get("dim_cavity", 3)), dim_transmon=int(L.get("dim_transmon", 3)),
                n_th_cavity=_number(L.get("n_th", 0.0), "lindblad.n_th"),
                n_th_transmon=_number(L.get("n_th", 0.0), "lindblad.n_th"),
                gamma_q=_rate(L, "gamma_q_hz", "lindblad.", TWO_PI * 1e6),
                drive_amp=_rate(L, "drive_hz", "lindblad.", TWO_PI * 0.1e6))
        except ValueError as exc:
            raise ConfigError(str(exc), field="lindblad") from None
        lind = (lcfg, freq)
    points = [{"device": device, "flux": FluxPoint(float(f), b_par), "lindblad": lind} for f in fluxes]
    results, errors = run.grid(_pt_spectrum, points)
    cols = {"flux": fluxes}
    for k in TRANSITIONS:
        cols[f"{k}_Hz"] = _col(results, f"{k}_Hz")
    run.csv("transitions.csv", cols, _hole_meta(errors))
    split = np.array(cols["plus_Hz"], dtype=float) - np.array(cols["minus_Hz"], dtype=float)
    extra = {"min_vacuum_rabi_splitting_Hz": float(np.nanmin(split))}
    if lind is not None:
        fl, fr, s = [], [], []
        for f, r in zip(fluxes, results):
            for w, v in zip(lind[1], r["s21"] if r else [float("nan")] * len(lind[1])):
                fl.append(f)
                fr.append(w / TWO_PI)
                s.append(v)
        run.csv("s21.csv", {"flux": fl, "freq_Hz": fr, "s21_abs": s})
    run.finish(extra)


def _drive_grid(run, mode):
    cfg = run.config
    grid = _need(cfg, "grid")
    dets = TWO_PI * parse_axis(_need(grid, "detuning_hz", "grid."), "grid.detuning_hz")
    needs_atten = "power_dBm" in grid
    atten = _atten(cfg) if needs_atten else None
    label, vals, to_eps = _drive_axis(grid, None, atten)
    points = []
    for v in vals:
        for d in dets:
            points.append({"mode": mode, "det": float(d), "eps": to_eps(v, mode.omega_plus + d),
                           "branch": cfg.get("branch", "low"), "drive": float(v)})
    return label, vals, dets, points


def cmd_backaction(run):
    mode = _mode(run.config)
    label, vals, dets, points = _drive_grid(run, mode)
    results, errors = run.grid(_pt_backaction, points)
    cols = {label: [p["drive"] for p in points], "detuning_Hz": [p["det"] / TWO_PI for p in points],
            "epsilon": [p["eps"] for p in points]}
    for key in ("n_d", "Gamma_m_Hz", "delta_omega_m_Hz", "n_branches", "stable_flag"):
        cols[key] = _col(results, key)
    run.csv("backaction.csv", cols, _hole_meta(errors))
    run.finish()


def cmd_instability(run):
    from .backaction import minimum_threshold

    mode = _mode(run.config)
    label, vals, dets, points = _drive_grid(run, mode)
    results, errors = run.grid(_pt_backaction, points)
    unstable = [None if r is None else int(not r["stable_flag"]) for r in results]
    run.csv("instability_map.csv", {
        label: [p["drive"] for p in points], "detuning_Hz": [p["det"] / TWO_PI for p in points],
        "n_d": _col(results, "n_d"), "Gamma_m_Hz": _col(results, "Gamma_m_Hz"),
        "unstable": [("" if u is None else u) for u in unstable]}, _hole_meta(errors))
    # boundary: first unstable drive along each detuning column
    n_det = len(dets)
    bd, bv, bn = [], [], []
    for j in range(n_det):
        for i in range(len(vals)):
            r = results[i * n_det + j]
            if r is not None and not r["stable_flag"]:
                bd.append(dets[j] / TWO_PI)
                bv.append(vals[i])
                bn.append(r["n_d"])
                break
    run.csv("boundary.csv", {"detuning_Hz": bd, label: bv, "n_d": bn})
    n_min, det_min = minimum_threshold(mode, dets)
    run.json("threshold.json", {"min_threshold_n_d": n_min, "detuning_at_min_Hz": det_min / TWO_PI})
    run.finish({"min_threshold_n_d": n_min})


def _pump(cfg, mode_freq):
    from .ceqa import PumpProbeConfig

    p = _need(cfg, "pump")
    if "omega_d_hz" in p:
        wd = TWO_PI * _number(p["omega_d_hz"], "pump.omega_d_hz")
    else:
        wd = mode_freq + TWO_PI * _number(p.get("detuning_hz", 0.0), "pump.detuning_hz")
    if "epsilon_d_hz" in p:
        ed = TWO_PI * _number(p["epsilon_d_hz"], "pump.epsilon_d_hz")
    elif "power_dBm" in p:
        from .backaction import power_to_epsilon

        ed = float(power_to_epsilon(_number(p["power_dBm"], "pump.power_dBm"), wd, _atten(cfg)))
    else:
        raise ConfigError("pump needs epsilon_d_hz or power_dBm", field="pump")
    ep = TWO_PI * _number(p.get("epsilon_p_hz", ed / TWO_PI / 10), "pump.epsilon_p_hz")
    return PumpProbeConfig(epsilon_d=ed, omega_d=wd, epsilon_p=ep)


def _ceqa_model(cfg):
    from .ceqa import TlsConfig

    model = cfg.get("model", "weak")
    if model == "weak":
        base = _mode(cfg)
        freq = base.omega_plus
    elif model == "tls":
        t = _need(cfg, "tls")
        try:
            base = TlsConfig(tilde_omega_q=_rate(t, "omega_hz", "tls."),
                             gamma_q=_rate(t, "gamma_hz", "tls."), g_0=_rate(t, "g_hz", "tls."),
                             omega_m=_rate(t, "omega_m_hz", "tls."),
                             gamma_m=_rate(t, "gamma_m_hz", "tls."))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), field="tls") from None
        freq = base.tilde_omega_q
    else:
        raise ConfigError("model must be 'weak' or 'tls'", field="model")
    return model, base, freq


def _ceqa_trace(model, base, pp, delta):
    from .ceqa import tls_response, weak_kerr_response

    if model == "weak":
        return weak_kerr_response(base, pp, delta)
    return tls_response(base, pp, delta)


def cmd_ceqa(run):
    cfg = run.config
    model, base, freq = _ceqa_model(cfg)
    pp = _pump(cfg, freq)
    pp.check()
    delta = TWO_PI * parse_axis(_need(_need(cfg, "grid"), "delta_hz", "grid."), "grid.delta_hz")
    resp = _ceqa_trace(model, base, pp, delta)
    mag = np.abs(resp)
    noise = float(cfg.get("noise", 0.0))
    if noise > 0:
        rng = np.random.default_rng(run.seed)
        mag = mag * (1 + noise * rng.standard_normal(mag.shape))
    run.csv("trace.csv", {"delta_Hz": delta / TWO_PI, "re": resp.real, "im": resp.imag,
                          "abs": mag}, {"model": model, "noise": noise, "seed": run.seed})
    run.finish()


def cmd_fit(run):
    from .ceqa import aggregate_fits

    cfg = run.config
    model, base, freq = _ceqa_model(cfg)
    pp = _pump(cfg, freq)
    noise_model = cfg.get("noise_model", "multiplicative")
    if noise_model not in ("additive", "multiplicative"):
        raise ConfigError("must be 'additive' or 'multiplicative'", field="noise_model")
    if "trace" in cfg:
        path = Path(cfg["trace"])
        if not path.exists():
            raise ConfigError(f"trace file not found: {path}", field="trace")
        _, cols = read_csv(path)
        if "delta_Hz" not in cols or "abs" not in cols:
            raise ConfigError("trace needs delta_Hz and abs columns", field="trace")
        traces = [(TWO_PI * cols["delta_Hz"], cols["abs"])]
    else:
        syn = _need(cfg, "synthetic")
        truth_g = _rate(syn, "g_hz", "synthetic.")
        truth_gm = _rate(syn, "gamma_m_hz", "synthetic.")
        trials = int(syn.get("trials", 50))
        level = _number(syn.get("noise", 0.01), "synthetic.noise")
        delta = TWO_PI * parse_axis(_need(_need(cfg, "grid"), "delta_hz", "grid."), "grid.delta_hz")
        if model == "weak":
            truth = base.with_(g_plus=truth_g, gamma_m=truth_gm)
        else:
            truth = base.with_(g_0=truth_g, gamma_m=truth_gm)
        clean = np.abs(_ceqa_trace(model, truth, pp, delta))
        rng = np.random.default_rng(run.seed)
        traces = [(delta, clean * (1 + level * rng.standard_normal(clean.shape)))
                  for _ in range(trials)]
    points = [{"delta": d, "magnitude": m, "model": model, "base": base, "pp": pp,
               "noise": noise_model} for d, m in traces]
    results, errors = run.grid(_pt_fit, points)
    good = [r for r in results if r is not None]
    fits = [SimpleNamespace(g=r["g"], g_sigma=r["g_sigma"]) for r in good]
    summary = {"n_fits": len(fits), "holes": len(results) - len(fits)}
    if fits:
        g_mean, g_err = aggregate_fits(fits)
        gs = np.array([f.g for f in fits])
        summary.update({"g_Hz": g_mean / TWO_PI, "g_err_Hz": g_err / TWO_PI,
                        "g_spread_Hz": float(gs.std(ddof=1)) / TWO_PI if len(gs) > 1 else 0.0,
                        "mean_reported_sigma_Hz": float(np.mean([f.g_sigma for f in fits])) / TWO_PI})
    run.csv("fits.csv", {"trial": list(range(len(results))),
                         "g_Hz": [float("nan") if r is None else r["g"] / TWO_PI for r in results],
                         "g_sigma_Hz": [float("nan") if r is None else r["g_sigma"] / TWO_PI
                                        for r in results]}, {"seed": run.seed})
    run.json("fit.json", summary)
    run.finish(summary)


def cmd_fixed_points(run):
    from .semiclassical import three_mode_params

    cfg = run.config
    device = _device(cfg)
    flux = _flux(cfg, device)
    tm = cfg.get("three_mode", {})
    params = three_mode_params(device, flux, gamma=_rate(tm, "gamma_hz", "three_mode.", TWO_PI * 12e6),
                               g_0=_rate(tm, "g0_hz", "three_mode.", TWO_PI * 300e3),
                               kappa_b=_rate(tm, "kappa_b_hz", "three_mode.", TWO_PI * 8e6),
                               kerr_factor=_number(tm.get("kerr_factor", 2.0), "three_mode.kerr_factor"))
    grid = _need(cfg, "grid")
    freqs = TWO_PI * parse_axis(_need(grid, "freq_hz", "grid."), "grid.freq_hz")
    atten = device.atten_product if "power_dBm" in grid else None
    label, vals, to_eps = _drive_axis(grid, None, atten)
    n_scan = int(cfg.get("n_scan", 4001))
    points = [{"params": params, "wd": float(w), "eps": to_eps(v, w), "drive": float(v),
               "n_scan": n_scan} for v in vals for w in freqs]
    results, errors = run.grid(_pt_fixed, points)
    run.csv("regions.csv", {
        label: [p["drive"] for p in points], "freq_Hz": [p["wd"] / TWO_PI for p in points],
        "n_fp": _col(results, "n_fp", -1), "n_stable": _col(results, "n_stable", -1),
        "mech_unstable": _col(results, "mech_unstable", "")}, _hole_meta(errors))
    run.finish()


def cmd_polariton_map(run):
    from .polariton_tls import enumerate_transitions
    from .spectrum import polariton_spectrum

    cfg = run.config
    device = _device(cfg)
    flux = _flux(cfg, device)
    t = cfg.get("tls", {})
    labels = tuple(t.get("labels", ("minus", "plus", "minus_alpha", "minus_beta")))
    spec = polariton_spectrum(device, flux, labels=labels)
    gammas = {k: TWO_PI * _number(v, f"tls.gammas_hz.{k}") for k, v in t.get("gammas_hz", {}).items()}
    gphis = {k: TWO_PI * _number(v, f"tls.gamma_phis_hz.{k}")
             for k, v in t.get("gamma_phis_hz", {}).items()}
    g_ref = _rate(t, "g_plus_ref_hz", "tls.", 0.0) or None
    try:
        trs = enumerate_transitions(spec, device.omega_m, device.gamma_m, weights=t.get("weights"),
                                    gammas=gammas, gamma_phis=gphis, labels=labels, g_plus_ref=g_ref)
    except ValueError as exc:
        raise ConfigError(str(exc), field="tls") from None
    grid = _need(cfg, "grid")
    freqs = TWO_PI * parse_axis(_need(grid, "freq_hz", "grid."), "grid.freq_hz")
    atten = device.atten_product if "power_dBm" in grid else None
    label, vals, to_eps = _drive_axis(grid, None, atten)
    points = [{"transitions": trs, "wd": float(w), "eps": to_eps(v, w), "drive": float(v)}
              for v in vals for w in freqs]
    results, errors = run.grid(_pt_polariton, points)
    bitdoc = ";".join(f"bit{k}={tr.label}" for k, tr in enumerate(trs))
    run.csv("polariton_map.csv", {
        label: [p["drive"] for p in points], "freq_Hz": [p["wd"] / TWO_PI for p in points],
        "unstable": _col(results, "unstable", ""), "which_transitions": _col(results, "which_transitions", -1)},
        dict(_hole_meta(errors), which_transitions=bitdoc))
    run.json("transitions.json", {"transitions": [
        {"label": tr.label, "freq_Hz": tr.omega_i / TWO_PI, "g_Hz": tr.g_i / TWO_PI,
         "gamma_Hz": tr.gamma_i / TWO_PI, "gamma_phi_Hz": tr.gamma_phi_i / TWO_PI,
         "thermal_weight": tr.thermal_weight} for tr in trs]})
    run.finish()


def cmd_timedomain(run):
    from .backaction import power_to_epsilon
    from .timedomain import accelerate, comb_run

    cfg = run.config
    mode = _mode(cfg)
    factor = _number(cfg.get("accelerate", 1.0), "accelerate")
    if factor != 1.0:
        mode = accelerate(mode, factor)
    d = _need(cfg, "drive")
    det = TWO_PI * _number(_need(d, "detuning_hz", "drive."), "drive.detuning_hz")
    if "epsilon_hz" in d:
        eps = TWO_PI * _number(d["epsilon_hz"], "drive.epsilon_hz")
    elif "power_dBm" in d:
        eps = float(power_to_epsilon(_number(d["power_dBm"], "drive.power_dBm"),
                                     mode.omega_plus + det, _atten(cfg)))
    else:
        raise ConfigError("drive needs epsilon_hz or power_dBm", field="drive")
    periods = int(cfg.get("periods", 600))
    try:
        res = comb_run(mode, det, eps, periods=periods,
                       n_thermal=_number(cfg.get("n_thermal", 365.0), "n_thermal"))
    except ValueError as exc:
        raise ConfigError(str(exc), field="periods") from None
    run.csv("timeseries.csv", res.series.to_columns())
    run.csv("psd.csv", {"freq_Hz": res.spectrum.freq, "psd": res.spectrum.psd},
            {"center_lab_Hz": (mode.omega_plus + det) / TWO_PI})
    summary = {"comb_detected": res.detected, "comb_spacing_Hz": res.spacing,
               "status": res.status, "stationarity": res.stationarity,
               "peaks_Hz": [f for f, _ in res.spectrum.peaks]}
    run.json("comb.json", summary)
    run.finish({"comb_detected": res.detected, "status": res.status})


def cmd_calibrate(run):
    from . import calibration as cal

    cfg = run.config
    device = _device(cfg)
    report = {}
    if "dispersive" in cfg:
        dsp = cfg["dispersive"]
        wq = _rate(dsp, "transmon_frequency_hz", "dispersive.")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            chi = cal.dispersive_shift(device.J, wq - device.omega_c, device.alpha_T, device.kappa_b)
        report["chi_Hz"] = chi / TWO_PI
        report["chi_warnings"] = [str(w.message) for w in caught]
    data = cfg.get("data", {})

    def load(key, needed):
        path = Path(data[key])
        if not path.exists():
            raise ConfigError(f"data file not found: {path}", field=f"data.{key}")
        _, cols = read_csv(path)
        for n in needed:
            if n not in cols:
                raise ConfigError(f"missing column {n}", field=f"data.{key}")
        return cols

    if "stark" in data:
        c = load("stark", ("power_dBm", "n_d"))
        report["atten_product"] = cal.fit_atten_product(
            c["power_dBm"], c["n_d"], _rate(cfg, "probe_frequency_hz", "", device.omega_c),
            _rate(cfg, "kappa_hz", "", device.kappa_b))
    kappa_e = _rate(cfg, "kappa_e_hz", "", device.kappa_e or TWO_PI * 6.2e6)
    if "gain" in data:
        c = load("gain", ("P_d_W", "n_d"))
        report["gain_dB"] = cal.output_gain(c["P_d_W"], c["n_d"], kappa_e,
                                            _rate(cfg, "mode_frequency_hz", "", device.omega_c))
    if "thermometry" in data:
        c = load("thermometry", ("svv_W_per_Hz", "n_d"))
        th = _need(cfg, "thermometry")
        n_m, T = cal.sideband_thermometry(
            c["svv_W_per_Hz"], c["n_d"], _rate(th, "g_hz", "thermometry."),
            _rate(th, "kappa_hz", "thermometry."), _rate(th, "gamma_m_hz", "thermometry.", device.gamma_m),
            kappa_e, _number(th.get("gain_dB", report.get("gain_dB", device.gain_dB)), "thermometry.gain_dB"),
            _rate(th, "mode_frequency_hz", "thermometry.", device.omega_c), device.omega_m)
        report.update({"n_m": n_m, "T_mode_K": T})
    if "reflection" in data:
        c = load("reflection", ("freq_Hz",))
        if "re" in c and "im" in c:
            trace = c["re"] + 1j * c["im"]
        elif "abs" in c:
            trace = c["abs"]
        else:
            raise ConfigError("reflection data needs re/im or abs columns", field="data.reflection")
        fit = cal.reflection_fit(TWO_PI * c["freq_Hz"], trace)
        report.update({"kappa_e_Hz": fit.kappa_e / TWO_PI, "kappa_rest_Hz": fit.kappa_rest / TWO_PI,
                       "omega_c_Hz": fit.omega_c / TWO_PI,
                       "kappa_e_sigma_Hz": fit.sigmas["kappa_e"] / TWO_PI})
    if "n_m" in cfg:
        n_m = _number(cfg["n_m"], "n_m")
        report["T_from_n_m_K"] = cal.bose_temperature(n_m, device.omega_m)
    run.json("calibration.json", report)
    run.finish()


COMMANDS = {
    "spectrum": cmd_spectrum,
    "backaction": cmd_backaction,
    "instability-map": cmd_instability,
    "ceqa": cmd_ceqa,
    "fit": cmd_fit,
    "fixed-points": cmd_fixed_points,
    "polariton-map": cmd_polariton_map,
    "timedomain": cmd_timedomain,
    "calibrate": cmd_calibrate,
}


def _set_dotted(cfg, dotted, value):
    node = cfg
    parts = dotted.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def cmd_sweep(run):
    """Run another command over the product of ``vary`` values, one subdirectory each."""
    cfg = run.config
    command = _need(cfg, "command")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}", field="command")
    base = _need(cfg, "base")
    if isinstance(base, str):
        base, _ = load_yaml(base)
    vary = _need(cfg, "vary")
    if not isinstance(vary, dict) or not vary or any(not isinstance(v, list) or not v
                                                     for v in vary.values()):
        raise ConfigError("vary must map dotted keys to non-empty lists", field="vary")
    combos = grid_points(vary)
    rows = {"run": [], "config_hash": [], "status": []}
    for k in vary:
        rows[k] = []
    for i, combo in enumerate(combos):
        sub = copy.deepcopy(base)
        for key, value in combo.items():
            _set_dotted(sub, key, value)
        args = argparse.Namespace(out=str(run.out / f"run_{i:04d}"), workers=run.workers,
                                  resume=run.resume, seed=run.seed)
        child = Run(command, sub, args)
        try:
            COMMANDS[command](child)
            status = "ok"
        except FailureBudgetExceeded as exc:
            status = f"failed: {exc}"
        rows["run"].append(i)
        rows["config_hash"].append(child.hash)
        rows["status"].append(status)
        for key, value in combo.items():
            rows[key].append(value)
    run.csv("sweep_index.csv", rows)
    run.finish({"runs": len(combos)})


COMMANDS["sweep"] = cmd_sweep


# ---------------------------------------------------------------------------
# entry point

def build_parser():
    parser = argparse.ArgumentParser(prog="fluxmech", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (env {ENV_WORKERS})")
        p.add_argument("--out", default=None, help=f"output directory (env {ENV_OUT})")
        p.add_argument("--resume", action="store_true", help="continue from a checkpoint")
        p.add_argument("--seed", type=int, default=None, help="seed for Monte-Carlo commands")
    return parser


def _error(kind, exc, code, out=None):
    payload = {"error": kind, "message": str(getattr(exc, "message", exc)), "exit_code": code}
    for attr in ("field", "line", "n_failed", "n_total"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    print(json.dumps(payload), file=sys.stderr)
    if out is not None:
        try:
            write_json(Path(out) / "error.json", payload)
        except OSError:
            pass
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    run = None
    try:
        config, _ = load_yaml(args.config)
        run = Run(args.command, config, args)
        COMMANDS[args.command](run)
    except ConfigError as exc:
        return _error("ConfigError", exc, EXIT_CONFIG, run.out if run else None)
    except FailureBudgetExceeded as exc:
        return _error("FailureBudgetExceeded", exc, EXIT_NUMERIC, run.out if run else None)
    except (FluxmechError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _error(type(exc).__name__, exc, EXIT_NUMERIC, run.out if run else None)
    except ValueError as exc:
        # malformed values surfacing from constructors count as configuration errors
        return _error("ConfigError", exc, EXIT_CONFIG, run.out if run else None)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
