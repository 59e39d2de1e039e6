"""Command-line front end for the simulate / probe / synthesize / optimize pipeline.

Exit codes: 0 success, 2 configuration error, 3 tomography inconsistency,
4 optimizer budget exhausted without convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bb_synthesis import (
    StabilizerSpace,
    TargetSpec,
    check_encoded,
    solve_single_qubit_gate,
    solve_storage,
    solve_two_qubit,
)
from .errors import BBForgeError, InconsistencyError
from .open_system_sim import (
    DensityMatrix,
    PulseGroup,
    SystemBathModel,
    _pairs_to_matrix,
    apply_bb_cycle,
    kraus_from_model,
    model_from_dict,
    reduced_state,
)
from .operator_algebra import CoordinateVector, build_pauli_basis
from .optimizer import LearningLoopConfig, learning_loop
from .serialization import dump_json, write_csv
from .tomography import chi_from_lambda, extract_generator, run_qpt

__all__ = ["ExperimentConfig", "main", "entry_point"]


class ConfigError(BBForgeError):
    """Malformed or incomplete experiment configuration."""


@dataclass
class ExperimentConfig:
    """Parsed experiment configuration."""

    model: SystemBathModel
    probe_time: float
    raw: dict
    base_dir: Path

    @classmethod
    def load(cls, path: str, probe_override: float | None = None) -> "ExperimentConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {path!r} does not exist")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config parse failure at line {exc.lineno}: {exc.msg}") from exc
        if "model" in raw:
            model_data = raw["model"]
        elif "model_path" in raw:
            mp = p.parent / raw["model_path"]
            if not mp.exists():
                raise ConfigError(f"referenced model file {raw['model_path']!r} does not exist")
            try:
                model_data = json.loads(mp.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"model file parse failure at line {exc.lineno}: {exc.msg}") from exc
        else:
            raise ConfigError("config needs a 'model' or 'model_path' entry")
        try:
            model = model_from_dict(model_data)
        except (KeyError, BBForgeError, ValueError) as exc:
            raise ConfigError(f"invalid model: {exc}") from exc
        probe = probe_override if probe_override is not None else raw.get("probe_time")
        if probe is None:
            probe = 0.01 / max(float(np.linalg.norm(model.total_hamiltonian, 2)), 1.0)
        probe = float(probe)
        if probe <= 0:
            raise ConfigError("probe_time must be positive")
        return cls(model=model, probe_time=probe, raw=raw, base_dir=p.parent)

    def initial_state(self) -> DensityMatrix:
        if "initial_state" in self.raw:
            return DensityMatrix(_pairs_to_matrix(self.raw["initial_state"]))
        # default: |+> on every system qubit, the coherence-sensitive choice
        dim = self.model.system_dim
        psi = np.ones(dim, dtype=complex) / np.sqrt(dim)
        return DensityMatrix.from_state_vector(psi)

    def target(self) -> TargetSpec:
        t = self.raw.get("target", {"kind": "storage"})
        try:
            kind = t.get("kind", "storage")
            wanted = np.asarray(t["wanted"], dtype=float) if "wanted" in t else None
            stabilizer = None
            if "stabilizer" in t:
                stabilizer = StabilizerSpace(
                    generators=tuple(_pairs_to_matrix(g) for g in t["stabilizer"])
                )
            return TargetSpec(kind=kind, wanted=wanted, stabilizer=stabilizer)
        except (BBForgeError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid target: {exc}") from exc

    def loop_config(self, seed_override: int | None = None) -> LearningLoopConfig:
        loop = dict(self.raw.get("loop", {}))
        if seed_override is not None:
            loop["seed"] = seed_override
        loop.setdefault("probe_time", self.probe_time)
        try:
            return LearningLoopConfig(**loop)
        except (TypeError, BBForgeError) as exc:
            raise ConfigError(f"invalid loop settings: {exc}") from exc


def _trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(a - b)
    return float(0.5 * np.abs(ev).sum())


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = ExperimentConfig.load(args.config, args.probe_time)
    sim = cfg.raw.get("simulate", {})
    t_max = float(sim.get("time_max", 1.0))
    steps = int(sim.get("steps", 50))
    if t_max <= 0 or steps < 1:
        raise ConfigError("simulate.time_max must be positive and steps >= 1")
    rho0 = cfg.initial_state()
    rows = []
    for k in range(steps + 1):
        t = t_max * k / steps
        rho_t = reduced_state(cfg.model, rho0, t)
        rows.append((t, _trace_distance(rho_t.matrix, rho0.matrix)))
    out = _out_dir(args)
    write_csv(out / "trajectory.csv", ["time", "trace_distance"], rows)
    print(f"wrote {out / 'trajectory.csv'} ({steps + 1} samples to t={t_max})")
    return 0


def _probe_chi(cfg: ExperimentConfig):
    basis = build_pauli_basis(cfg.model.num_qubits)
    kraus = kraus_from_model(cfg.model, cfg.probe_time)
    data = run_qpt(kraus.apply, basis, time_tag=cfg.probe_time)
    return chi_from_lambda(data), basis


def cmd_tomography(args) -> int:
    cfg = ExperimentConfig.load(args.config, args.probe_time)
    chi, _ = _probe_chi(cfg)
    out = _out_dir(args)
    dump_json(chi.to_dict(), out / "chi.json")
    print(
        f"wrote {out / 'chi.json'} (t={cfg.probe_time}, "
        f"inversion residual {chi.residual:.3e}, skew norm {chi.skew_norm:.3e})"
    )
    return 0


def cmd_synthesize(args) -> int:
    cfg = ExperimentConfig.load(args.config, args.probe_time)
    target = cfg.target()
    synth = cfg.raw.get("synthesis", {})
    max_size = int(synth.get("max_group_size", 8))
    delta_t = float(synth.get("delta_t", 0.1))
    ansatz = synth.get("ansatz", "local_products")
    chi, basis = _probe_chi(cfg)
    gen = extract_generator(chi)
    if target.kind == "storage":
        result = solve_storage(gen, int(synth.get("qubit", 0)), max_size, delta_t=delta_t)
    elif target.kind == "single_qubit":
        result = solve_single_qubit_gate(gen, target, int(synth.get("qubit", 0)), max_size, delta_t=delta_t)
    elif target.kind == "two_qubit":
        result = solve_two_qubit(gen, target, tuple(synth.get("pair", (0, 1))), ansatz, max_group_size=max_size, delta_t=delta_t)
    else:
        raise ConfigError(f"synthesize does not handle target kind {target.kind!r}")
    payload = result.to_dict()
    if target.stabilizer is not None and target.kind != "two_qubit":
        achieved = CoordinateVector(np.asarray(result.residual.error_vector.coords) + target.wanted_vector(), result.residual.error_vector.basis)
        enc = check_encoded(achieved, target)
        payload["stabilizer_distance"] = enc.stabilizer_distance
    out = _out_dir(args)
    dump_json(payload, out / "synthesis.json")
    print(f"pulse set of size {result.group.size}, cycle time {result.group.cycle_time}")
    for entry in payload["axis_angles"][1:]:
        if entry is not None:
            ax = ", ".join(f"{x:+.6f}" for x in entry["axis"])
            print(f"  pulse: axis ({ax}), angle {entry['angle']:+.6f} rad")
    print(f"residual distance {result.residual.scalar_distance:.3e}; {result.free_parameters}")
    print(f"wrote {out / 'synthesis.json'}")
    return 0


def _group_from_payload(data: dict, delta_t: float | None) -> PulseGroup:
    pulses = [_pairs_to_matrix(p) for p in data["pulses"]]
    dt = float(delta_t if delta_t is not None else data.get("delta_t", 0.1))
    return PulseGroup.from_pulses(pulses, dt)


def cmd_verify(args) -> int:
    cfg = ExperimentConfig.load(args.config, args.probe_time)
    ver = cfg.raw.get("verify", {})
    if "group_path" in ver:
        gp = cfg.base_dir / ver["group_path"]
        if not gp.exists():
            raise ConfigError(f"group file {ver['group_path']!r} does not exist")
        group_data = json.loads(gp.read_text())
    elif "group" in ver:
        group_data = ver["group"]
    else:
        raise ConfigError("verify needs 'group_path' or an inline 'group'")
    delta_t = ver.get("delta_t")
    group = _group_from_payload(group_data, delta_t)
    total_time = float(ver.get("total_time", 1.0))
    cycles = max(1, int(round(total_time / group.cycle_time)))
    rho0 = cfg.initial_state()
    pulsed = apply_bb_cycle(cfg.model, group, cycles, rho0)
    horizon = cycles * group.cycle_time
    plain = reduced_state(cfg.model, rho0, horizon)
    err_pulsed = _trace_distance(pulsed.matrix, rho0.matrix)
    err_plain = _trace_distance(plain.matrix, rho0.matrix)
    report = {
        "horizon": horizon,
        "cycles": cycles,
        "unpulsed_error": err_plain,
        "pulsed_error": err_pulsed,
        "improvement_factor": err_plain / err_pulsed if err_pulsed > 0 else None,
    }
    out = _out_dir(args)
    dump_json(report, out / "verify.json")
    print(
        f"unpulsed error {err_plain:.3e}, pulsed error {err_pulsed:.3e} "
        f"over {cycles} cycles (t={horizon})"
    )
    return 0


def cmd_optimize(args) -> int:
    cfg = ExperimentConfig.load(args.config, args.probe_time)
    target = cfg.target()
    loop_cfg = cfg.loop_config(args.seed)
    best, records = learning_loop(cfg.model, target, loop_cfg)
    out = _out_dir(args)
    rows = [
        (r.generation, r.best_cost, r.mean_cost, r.best_group.size, r.converged)
        for r in records
    ]
    write_csv(out / "generations.csv", ["generation", "best_J", "mean_J", "group_size", "converged"], rows)
    best_payload = {
        "group_size": best.size,
        "delta_t": best.delta_t,
        "cycle_time": best.cycle_time,
        "pulses": [[[[float(x.real), float(x.imag)] for x in row] for row in p] for p in best.pulses],
        "best_cost": records[-1].best_cost,
        "converged": records[-1].converged,
        "generations": len(records),
    }
    dump_json(best_payload, out / "best_group.json")
    print(
        f"{'converged' if records[-1].converged else 'budget exhausted'} after "
        f"{len(records)} generations; best J {records[-1].best_cost:.3e}"
    )
    print(f"wrote {out / 'generations.csv'} and {out / 'best_group.json'}")
    return 0 if records[-1].converged else 4


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bbforge",
        description="Determine decoupling pulse sequences from simulated process tomography data.",
    )
    parser.add_argument("--config", required=True, help="experiment configuration JSON")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the loop RNG seed")
    parser.add_argument("--probe-time", type=float, default=None, help="override the tomography probe time")
    parser.add_argument(
        "command",
        choices=["simulate", "tomography", "synthesize", "verify", "optimize"],
        help="pipeline stage to run",
    )
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "tomography": cmd_tomography,
        "synthesize": cmd_synthesize,
        "verify": cmd_verify,
        "optimize": cmd_optimize,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InconsistencyError as exc:
        print(f"tomography inconsistency: {exc}", file=sys.stderr)
        return 3
    except BBForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
