"""
實驗管道
每個 CLI 子命令對應一個方法，輸出 CSV 並由 finalize 寫出運行清單
"""

import json
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .. import __version__
from ..analysis.instability import (
    DesignCase,
    InstabilityDesign,
    aggregate_designs,
    design_is1,
    design_is2,
    verify_design,
)
from ..analysis.ratefit import FINITE_DIMENSION_NOTE, compare_decay, default_window, fit_exponential, fit_power
from ..analysis.spectral import (
    generator_spectrum,
    half_decade_ratio,
    quasimode_test,
    resolved_band,
    resolved_pairs,
    resolvent_sweep_reduced,
    t_operator_eigs,
)
from ..dynamics.assembly import FeedbackParams, build_generator, validate_params
from ..dynamics.evolution import (
    SystemState,
    dissipation_audit,
    random_state,
    simulate,
    smooth_state,
    time_grid,
)
from ..plate.femrad import ModeSpace, build_mode_space
from ..plate.geometry import mgc_check
from ..utils.compute_manager import ComputeManager
from ..utils.errors import ConfigError, NumericalError
from ..utils.file_manager import FileManager
from ..utils.logger import get_logger
from .config import ExperimentConfig

SUBCOMMANDS = (
    "mgc-check",
    "simulate",
    "spectrum",
    "t-eigs",
    "quasimode",
    "resolvent-sweep",
    "design-is1",
    "design-is2",
    "verify-design",
    "decay-fit",
)

DESIGN_COLUMNS = ["lambda", "case", "mode", "tau1", "tau2", "k", "l", "drift", "residual"]


class PlateLabPipeline:
    """PlateLab 實驗管道"""

    def __init__(self, config: ExperimentConfig, out_dir, compute: Optional[ComputeManager] = None):
        self.config = config
        self.logger = get_logger()
        self.compute = compute or ComputeManager()
        self.file_manager = FileManager(out_dir)
        self.out_dir = self.file_manager.base_dir
        self.outputs: List[Path] = []

        self.geom = config.annulus()
        self.plate = config.plate()
        self.params = config.feedback()
        self.system = config.system()
        self.modes = config.modes()
        self.elements = config.get_int("fem.elements")
        self.seed = config.get_int("run.seed")
        self.hypothesis = validate_params(self.params, config.get_float("hypothesis.tolerance"))
        self._spaces: Dict[int, ModeSpace] = {}

    # ------------------------------------------------------------------
    # 共用
    # ------------------------------------------------------------------
    def space(self, n: int) -> ModeSpace:
        if n not in self._spaces:
            self._spaces[n] = build_mode_space(self.geom, self.plate, n, self.elements)
        return self._spaces[n]

    def per_mode(self, func: Callable[[int], Any]) -> List[Any]:
        """依 fem.modes 順序組合各模態結果"""
        for n in self.modes:
            self.space(n)
        return self.compute.map_ordered(func, self.modes)

    def write(self, rows, name: str, columns: Optional[List[str]] = None) -> Path:
        path = self.file_manager.write_table(rows, self.out_dir / name, columns)
        self.outputs.append(path)
        self.logger.info(f"💾 已寫出 {path.name}")
        return path

    def _delay_grid(self, params: FeedbackParams) -> Tuple[int, int, float]:
        cap = self.config.get_int("delay.cap")
        dt = self.config.get_float("simulation.dt", optional=True)
        target = max(self.config.get_int("delay.n_rho1"), self.config.get_int("delay.n_rho2"))
        if dt is None:
            n1, n2, dt, exact = time_grid(params.tau1, params.tau2, target, cap)
            self.logger.info(f"⏱️ 延遲網格 N_ρ = ({n1}, {n2}), dt = {dt:.6g}, 精確平移 = {exact}")
            return n1, n2, dt
        return self.config.get_int("delay.n_rho1"), self.config.get_int("delay.n_rho2"), dt

    # ------------------------------------------------------------------
    # 子命令
    # ------------------------------------------------------------------
    def run_mgc_check(self) -> Dict[str, Any]:
        report = mgc_check(self.geom, self.config.get_int("mgc.samples"))
        row = {
            "min_hnu_gamma1": report.min_hnu_gamma1,
            "max_hnu_gamma0": report.max_hnu_gamma0,
            "satisfied": report.satisfied,
            "delta": report.delta if report.delta is not None else np.nan,
        }
        self.write([row], "mgc.csv")
        delta = "none" if report.delta is None else f"{report.delta:.17g}"
        print(f"satisfied={str(report.satisfied).lower()}, delta={delta}")
        return row

    def run_simulate(self) -> Dict[str, Any]:
        if not self.hypothesis.h_satisfied:
            self.logger.warning("⚠️ 參數不滿足 (H)，能量可能不遞減")
        n1, n2, dt = self._delay_grid(self.params)
        t_end = self.config.get_float("simulation.t_end")
        initial = self.config.get_str("simulation.initial")
        checkpoint_every = self.config.get_int("simulation.checkpoint_every")
        progress = self.config.get_bool("simulation.progress")

        def run_mode(n: int):
            gen = build_generator(self.system, self.space(n), self.params, n1, n2)
            if initial == "random":
                state = random_state(gen, np.random.default_rng([self.seed, n]))
            elif initial == "smooth":
                state = smooth_state(gen, self.config.get_int("decay.smooth_modes"))
            else:
                state = SystemState.zeros(gen)
            trajectory = simulate(gen, state, dt, t_end, checkpoint_every, progress=progress)
            return trajectory, dissipation_audit(trajectory, gen)

        summary = []
        for n, (trajectory, ledger) in zip(self.modes, self.per_mode(run_mode)):
            self.write(trajectory.to_frame(), f"energy_mode{n}.csv")
            self.write(ledger.to_frame(trajectory.times), f"audit_mode{n}.csv")
            totals = trajectory.totals
            summary.append(
                {"mode": n, "E0": totals[0], "E_end": totals[-1], "flags": ledger.n_flags, "steps": len(totals) - 1}
            )
            self.logger.info(f"📊 模態 {n}: E(0) = {totals[0]:.6e}, E(T) = {totals[-1]:.6e}, 違規 {ledger.n_flags}")
        self.write(summary, "simulate_summary.csv")
        return {"flags": int(sum(row["flags"] for row in summary))}

    def run_spectrum(self) -> Dict[str, Any]:
        count = self.config.get_int("spectral.count")
        n1, n2 = self.config.get_int("delay.n_rho1"), self.config.get_int("delay.n_rho2")

        def run_mode(n: int):
            gen = build_generator(self.system, self.space(n), self.params, n1, n2)
            return generator_spectrum(gen, min(count, len(gen.active)))

        rows = []
        worst = -np.inf
        for n, values in zip(self.modes, self.per_mode(run_mode)):
            worst = max(worst, float(values[0].real))
            rows.extend(
                {"mode": n, "index": i, "real": v.real, "imag": v.imag, "system": int(self.system)}
                for i, v in enumerate(values)
            )
        self.write(rows, "spectrum.csv")
        self.logger.info(f"📊 最大實部 = {worst:.6e}")
        return {"max_real": worst}

    def run_t_eigs(self) -> Dict[str, Any]:
        count = self.config.get_int("spectral.count")
        tol = self.config.get_float("spectral.tolerance")

        def run_mode(n: int):
            space = self.space(n)
            pairs = t_operator_eigs(space, min(count, space.ndof))
            return pairs, len(resolved_pairs(space, len(pairs), tol))

        rows = []
        for n, (pairs, resolved) in zip(self.modes, self.per_mode(run_mode)):
            rows.extend(
                {"mode": n, "index": i, "mu4": p.mu4, "mu": p.mu, "resolved": i < resolved}
                for i, p in enumerate(pairs)
            )
        self.write(rows, "t_eigs.csv")
        return {"pairs": len(rows)}

    def run_quasimode(self) -> Dict[str, Any]:
        count = self.config.get_int("quasimode.pairs")
        tol = self.config.get_float("spectral.tolerance")

        def run_mode(n: int):
            space = self.space(n)
            pairs = resolved_pairs(space, min(count, space.ndof), tol)
            if not pairs:
                raise NumericalError(f"模態 {n} 沒有通過網格解析檢查的特徵對")
            return quasimode_test(space, self.params, pairs)

        rows = []
        for n, samples in zip(self.modes, self.per_mode(run_mode)):
            rows.extend(
                {"mode": n, "mu": s.mu, "u_norm": s.u_norm, "f_norm": s.f_norm, "ratio": s.ratio}
                for s in samples
            )
            if len(samples) >= 2:
                slope = np.polyfit(np.log([s.mu for s in samples]), np.log([s.f_norm for s in samples]), 1)[0]
                self.logger.info(f"📊 模態 {n}: ‖F‖ 對 μ 的對數斜率 = {slope:.4f}")
        self.write(rows, "quasimode.csv")
        return {"samples": len(rows)}

    def run_resolvent_sweep(self) -> Dict[str, Any]:
        lam_min = self.config.get_float("sweep.lambda_min")
        lam_max = self.config.get_float("sweep.lambda_max", optional=True)
        points = self.config.get_int("sweep.points")
        estimator = self.config.get_str("sweep.estimator")
        tol = self.config.get_float("spectral.tolerance")

        rows = []
        for n in self.modes:
            space = self.space(n)
            top = lam_max if lam_max is not None else resolved_band(space, tol)
            if top <= lam_min:
                raise ConfigError(f"sweep.lambda_min ({lam_min}) 必須小於頻帶上限 {top}", key="sweep.lambda_min")
            lambdas = np.geomspace(lam_min, top, points)
            samples = resolvent_sweep_reduced(
                space, self.params, self.system, lambdas, estimator, self.seed, self.compute
            )
            rows.extend(
                {"lambda": s.lam, "gain": s.gain, "system": int(self.system), "mode": n, "mesh": self.elements}
                for s in samples
            )
            self.logger.info(f"📊 模態 {n}: λ ∈ [{lam_min:.4g}, {top:.4g}], 最大增益 {max(s.gain for s in samples):.6e}")
            ratio = half_decade_ratio(samples)
            if np.isfinite(ratio):
                self.logger.info(f"📊 模態 {n}: 最高/最低半個十倍頻的最大增益比 = {ratio:.4f}")
        self.write(rows, "resolvent_sweep.csv")
        return {"samples": len(rows)}

    def _design_options(self) -> Dict[str, Any]:
        return {
            "k": self.config.get_int("design.k"),
            "l": self.config.get_int("design.l"),
            "mirror": self.config.get_bool("design.mirror_branch"),
            "menu": self.config.get_int("design.menu"),
        }

    def _designs(self, case: DesignCase) -> List[InstabilityDesign]:
        options = self._design_options()
        if case is DesignCase.IS1:
            which = self.config.get_int("design.which_eig")
            params = self.params if self.hypothesis.is1 else None
            return self.per_mode(lambda n: design_is1(self.space(n), which_eig=which, params=params, **options))
        p = self.params
        if abs(p.beta2) < p.beta1 or abs(p.gamma2) < p.gamma1:
            raise ConfigError("design-is2 需要 |β₂| ≥ β₁ 且 |γ₂| ≥ γ₁", key="feedback.beta2")
        return self.per_mode(lambda n: design_is2(self.space(n), p, **options))

    @staticmethod
    def _design_row(design: InstabilityDesign, drift=np.nan, residual=np.nan) -> Dict[str, Any]:
        return {
            "lambda": design.lam,
            "case": design.case.value,
            "mode": design.mode_n,
            "tau1": design.tau1,
            "tau2": design.tau2,
            "k": design.k,
            "l": design.l,
            "drift": drift,
            "residual": residual,
        }

    def _run_design(self, case: DesignCase) -> Dict[str, Any]:
        designs = self._designs(case)
        best = aggregate_designs(designs)
        self.write([self._design_row(d) for d in designs], f"design_{case.value.lower()}.csv", DESIGN_COLUMNS)
        menu = [
            {"index": i, "tau1": t1, "tau2": t2}
            for i, (t1, t2) in enumerate(zip(best.tau1_choices, best.tau2_choices))
        ]
        self.write(menu, f"design_{case.value.lower()}_menu.csv")
        self.logger.info(f"🎯 {case.value}: 最小 λ = {best.lam:.12g} (模態 {best.mode_n})")
        return {"lambda": best.lam, "mode": best.mode_n}

    def run_design_is1(self) -> Dict[str, Any]:
        return self._run_design(DesignCase.IS1)

    def run_design_is2(self) -> Dict[str, Any]:
        return self._run_design(DesignCase.IS2)

    def run_verify_design(self) -> Dict[str, Any]:
        case = DesignCase.IS1 if self.config.get_int("design.case") == 1 else DesignCase.IS2
        params = self.params
        if case is DesignCase.IS1 and not self.hypothesis.is1:
            raise ConfigError("IS₁ 驗證需要 |β₂| = β₁ 且 |γ₂| = γ₁", key="feedback.beta2")
        best = aggregate_designs(self._designs(case))
        report = verify_design(
            best,
            params,
            self.space(best.mode_n),
            n_rho_target=max(self.config.get_int("delay.n_rho1"), self.config.get_int("delay.n_rho2")),
            cap=self.config.get_int("delay.cap"),
            periods=self.config.get_float("design.periods"),
            progress=self.config.get_bool("simulation.progress"),
        )
        self.write([self._design_row(best, report.energy_drift, report.eigen_residual)], "verify_design.csv", DESIGN_COLUMNS)
        self.logger.info(f"📊 能量漂移 {report.energy_drift:.3e}, 特徵殘差 {report.eigen_residual:.3e}")
        return {"drift": report.energy_drift, "residual": report.eigen_residual}

    def run_decay_fit(self) -> Dict[str, Any]:
        skip = self.config.get_float("decay.skip")
        floor = self.config.get_float("decay.floor")
        source = self.config.get_str("decay.input", optional=True)
        self.logger.info(f"💡 {FINITE_DIMENSION_NOTE}")

        if source is not None:
            frame = self.file_manager.read_table(source)
            missing = {"time", "E_total"} - set(frame.columns)
            if missing:
                raise ConfigError(f"decay.input 缺少欄位: {sorted(missing)}", key="decay.input")
            times, energies = frame["time"].to_numpy(), frame["E_total"].to_numpy()
            window = default_window(times, energies, skip, floor)
            fits = [fit_exponential(times, energies, window)]
            if window[0] > 0.0:
                fits.append(fit_power(times, energies, window))
            self.write([fit.as_row() for fit in fits], "decay_fit.csv")
            return {"rate": fits[0].rate_or_exponent}

        n1 = self.config.get_int("delay.n_rho1")
        n2 = self.config.get_int("delay.n_rho2")
        cap = self.config.get_int("delay.cap")
        t_end = self.config.get_float("decay.t_end")
        smooth = self.config.get_int("decay.smooth_modes")

        results = self.per_mode(
            lambda n: compare_decay(self.space(n), self.params, max(n1, n2), cap, t_end, smooth, skip, floor)
        )
        rows = []
        for n, cmp in zip(self.modes, results):
            for system, fit in ((1, cmp.system1), (2, cmp.system2), (1, cmp.system1_power)):
                rows.append({"mode": n, "system": system, **fit.as_row(), "domain_norm": cmp.domain_norm})
            self.write(
                pd.DataFrame({"time": cmp.times, "E_total_system1": cmp.energies1, "E_total_system2": cmp.energies2}),
                f"decay_energy_mode{n}.csv",
            )
            verdict = "✅" if cmp.dichotomy else "⚠️"
            self.logger.info(
                f"{verdict} 模態 {n}: System2 速率 {cmp.system2.rate_or_exponent:.4f} "
                f"(r² = {cmp.system2.r_squared:.4f}), System1 速率 {cmp.system1.rate_or_exponent:.4f}"
            )
        self.write(rows, "decay_fit.csv")
        return {"comparisons": len(results)}

    # ------------------------------------------------------------------
    # 清單
    # ------------------------------------------------------------------
    def run(self, subcommand: str) -> Dict[str, Any]:
        if subcommand not in SUBCOMMANDS:
            raise ValueError(f"未知子命令: {subcommand}")
        handler = getattr(self, "run_" + subcommand.replace("-", "_"))
        return handler()

    def finalize(self, subcommand: str, wall_time: float) -> Path:
        """寫出 run_manifest.json：配置、版本、種子、網格參數、耗時與輸出校驗和"""
        manifest = {
            "subcommand": subcommand,
            "version": __version__,
            "seed": self.seed,
            "mesh": {
                "elements": self.elements,
                "modes": self.modes,
                "n_rho1": self.config.get_int("delay.n_rho1"),
                "n_rho2": self.config.get_int("delay.n_rho2"),
            },
            "threads": self.compute.describe(),
            "wall_time": wall_time,
            "config": self.config.to_nested(),
            "outputs": self.file_manager.create_manifest(self.out_dir, self.outputs)["files"],
        }
        path = self.out_dir / "run_manifest.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, ensure_ascii=False, sort_keys=True)
        self.file_manager.save_config(self.config.values, self.out_dir / "config_echo.cfg")
        return path
