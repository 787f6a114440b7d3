"""Command line driver: ``clustered-layers <command> --config run.yaml``.

Config blocks
-------------
problem  p, matrix_field {name, params}, domain {name, ...}, h, psi
         ("computed" or "analytic"; analytic needs the centred disk with
         the identity field), expansion_eps (list for the field command)
profile  exponents (list; defaults to [problem.p])
curve    initial {shape: circle|ellipse, radius | a, b, angle, center},
         points, optimize, tolerance
layers   N, eps (strictly decreasing), order, amplitudes, delta, delta0,
         newton (bool)
toda     c1, c2, convention ("printed" | "squared"), refine_order
output   directory

Every CSV starts with a ``# config_hash=...`` line and every JSON carries a
``config_hash`` key.  A ``manifest.json`` records versions, files and
timings per command.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import InvalidExponentError, LayerError, ResonanceError, ValidationError

__all__ = ["ExperimentConfig", "load_config", "main", "run"]

COMMANDS = ("profile", "geometry", "field", "toda", "assemble", "sweep")
BLOCKS = ("problem", "profile", "curve", "layers", "toda", "output")


# -------------------------------------------------------------- config ---- #
def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


def _number(block: dict, key: str, name: str, default=None) -> float:
    value = block.get(key, default)
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), f"{name}.{key} must be a number")
    return float(value)


@dataclass
class ExperimentConfig:
    problem: dict
    profile: dict = field(default_factory=dict)
    curve: dict | None = None
    layers: dict | None = None
    toda: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict, seed: int = 0) -> "ExperimentConfig":
        _require(isinstance(raw, dict), "config must be a mapping of blocks")
        unknown = set(raw) - set(BLOCKS)
        _require(not unknown, f"unknown config blocks: {sorted(unknown)}")
        _require("problem" in raw and isinstance(raw["problem"], dict), "config block 'problem' is required")
        raw = copy.deepcopy(raw)
        prob = raw["problem"]
        p = _number(prob, "p", "problem")
        if p <= 1.0:
            raise InvalidExponentError(f"problem.p must exceed 1, got {p}")
        prob["p"] = p
        prob.setdefault("matrix_field", {"name": "identity"})
        prob.setdefault("domain", {"name": "disk", "radius": 1.0})
        prob["h"] = _number(prob, "h", "problem", 1.0 / 64)
        _require(0.0 < prob["h"] < 0.5, "problem.h must lie in (0, 0.5)")
        prob.setdefault("psi", "computed")
        _require(prob["psi"] in ("computed", "analytic"), "problem.psi must be 'computed' or 'analytic'")
        prob.setdefault("expansion_eps", [0.2, 0.1, 0.05])
        _require(prob["domain"].get("name") in ("disk", "square", "ellipse"), "problem.domain.name must be disk, square or ellipse")
        _require(prob["matrix_field"].get("name") in ("identity", "diagonal", "rotated"), "problem.matrix_field.name must be identity, diagonal or rotated")
        if prob["psi"] == "analytic":
            dom = prob["domain"]
            _require(
                dom["name"] == "disk" and list(dom.get("center", [0.0, 0.0])) == [0.0, 0.0] and prob["matrix_field"]["name"] == "identity",
                "problem.psi 'analytic' needs a disk centred at the origin with the identity field",
            )

        prof = raw.get("profile") or {}
        prof["exponents"] = [float(x) for x in prof.get("exponents", [p])]
        _require(all(x > 1.0 for x in prof["exponents"]), "profile.exponents must exceed 1")

        curve = raw.get("curve")
        if curve is not None:
            _require(isinstance(curve, dict) and isinstance(curve.get("initial"), dict), "curve.initial is required")
            _require(curve["initial"].get("shape") in ("circle", "ellipse"), "curve.initial.shape must be circle or ellipse")
            curve.setdefault("points", 128)
            curve.setdefault("optimize", True)
            curve["tolerance"] = _number(curve, "tolerance", "curve", 1e-9)

        layers = raw.get("layers")
        if layers is not None:
            _require(isinstance(layers, dict), "layers must be a mapping")
            if p <= 3.0:
                raise InvalidExponentError(f"layers need p > 3, got p = {p}")
            N = layers.get("N")
            _require(isinstance(N, int) and N >= 1, "layers.N must be a positive integer")
            eps = layers.get("eps")
            _require(isinstance(eps, list) and len(eps) >= 1, "layers.eps must be a non-empty list")
            eps = [float(e) for e in eps]
            _require(all(0.0 < e < 1.0 for e in eps), "layers.eps values must lie in (0, 1)")
            _require(all(a > b for a, b in zip(eps, eps[1:])), "layers.eps must be strictly decreasing")
            layers["eps"] = eps
            layers.setdefault("order", 1)
            _require(layers["order"] in (0, 1), "layers.order must be 0 or 1")
            layers.setdefault("amplitudes", True)
            layers["delta"] = _number(layers, "delta", "layers", 0.14)
            layers["delta0"] = _number(layers, "delta0", "layers", 0.44)
            layers.setdefault("newton", False)

        toda = raw.get("toda") or {}
        toda.setdefault("c1", 1.0)
        toda.setdefault("c2", 1.0)
        toda.setdefault("convention", "printed")
        toda.setdefault("refine_order", 3)
        _require(toda["convention"] in ("printed", "squared"), "toda.convention must be 'printed' or 'squared'")
        _require(toda["refine_order"] in (1, 2, 3), "toda.refine_order must be 1, 2 or 3")

        output = raw.get("output") or {}
        output.setdefault("directory", "out")
        return cls(prob, prof, curve, layers, toda, output, int(seed))

    def to_dict(self) -> dict:
        out = {"problem": self.problem, "profile": self.profile, "toda": self.toda}
        if self.curve is not None:
            out["curve"] = self.curve
        if self.layers is not None:
            out["layers"] = self.layers
        return out

    @property
    def hash(self) -> str:
        text = json.dumps({"config": self.to_dict(), "seed": self.seed}, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_config(path, seed: int = 0) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"config is not valid YAML: {exc}") from exc
    return ExperimentConfig.from_dict(raw, seed)


# -------------------------------------------------------------- output ---- #
def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool,)):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    return f"{float(v):.15g}"


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class OutputDir:
    """Output directory bound to one config hash."""

    def __init__(self, path: Path, config_hash: str):
        self.path = Path(path)
        self.hash = config_hash
        self.written: list[Path] = []

    def check_provenance(self) -> None:
        if not self.path.exists():
            return
        for f in sorted(self.path.iterdir()):
            found = None
            if f.suffix == ".csv":
                with f.open() as fh:
                    first = fh.readline().strip()
                found = first.split("=", 1)[1] if first.startswith("# config_hash=") else "<none>"
            elif f.suffix == ".json":
                try:
                    found = json.loads(f.read_text()).get("config_hash", "<none>")
                except (json.JSONDecodeError, AttributeError):
                    found = "<none>"
            if found is not None and found != self.hash:
                raise ValidationError(f"{f} belongs to config {found}, not {self.hash}; use a fresh output directory")

    def _target(self, name: str) -> Path:
        self.path.mkdir(parents=True, exist_ok=True)
        target = self.path / name
        self.written.append(target)
        return target

    def csv(self, name: str, header: list[str], rows) -> None:
        lines = [f"# config_hash={self.hash}", ",".join(header)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        self._target(name).write_text("\n".join(lines) + "\n")

    def json(self, name: str, payload: dict) -> None:
        data = {"config_hash": self.hash, **_jsonable(payload)}
        self._target(name).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")

    def discard(self) -> None:
        for f in self.written:
            if f.exists():
                f.unlink()
        self.written.clear()

    def manifest(self, command: str, seconds: float, config: ExperimentConfig, threads: int) -> None:
        import numpy
        import scipy

        from . import __version__

        path = self.path / "manifest.json"
        data = json.loads(path.read_text()) if path.exists() else {}
        data.update(
            {
                "config_hash": self.hash,
                "seed": config.seed,
                "threads": threads,
                "versions": {
                    "python": platform.python_version(),
                    "numpy": numpy.__version__,
                    "scipy": scipy.__version__,
                    "clustered_layers": __version__,
                },
            }
        )
        cmds = data.setdefault("commands", {})
        cmds[command] = {"files": sorted(f.name for f in self.written), "seconds": round(seconds, 3)}
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------- pipeline ---- #
class Pipeline:
    """Lazily computed stages shared by the commands of one run."""

    def __init__(self, config: ExperimentConfig):
        self.cfg = config
        self._cache: dict = {}

    def _once(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    @property
    def p(self) -> float:
        return self.cfg.problem["p"]

    def profile(self, p: float | None = None):
        from .profile1d import build_profile

        p = self.p if p is None else p
        return self._once(("profile", p), lambda: build_profile(p))

    def matrix_field(self):
        from .geometry import MatrixField

        spec = self.cfg.problem["matrix_field"]
        return MatrixField.from_name(spec["name"], **spec.get("params", {}))

    def grid(self):
        from . import field2d as F

        def make():
            dom, h = self.cfg.problem["domain"], self.cfg.problem["h"]
            if dom["name"] == "disk":
                return F.disk_grid(h, dom.get("radius", 1.0), tuple(dom.get("center", (0.0, 0.0))))
            if dom["name"] == "square":
                return F.square_grid(h, dom.get("side", 1.0), tuple(dom.get("corner", (0.0, 0.0))))
            return F.ellipse_grid(h, dom.get("a", 1.0), dom.get("b", 0.7), tuple(dom.get("center", (0.0, 0.0))))

        return self._once("grid", make)

    def field(self):
        from . import field2d as F

        def make():
            import numpy as np
            from scipy import special

            op = F.discretize_operator(self.grid(), self.matrix_field())
            if self.cfg.problem["psi"] == "analytic":
                from .geometry import J01

                k = J01 / self.cfg.problem["domain"].get("radius", 1.0)
                return F.eigenfield_from_function(op, lambda x: special.j0(k * np.hypot(x[:, 0], x[:, 1])), k * k)
            return F.first_eigenpair(op)

        return self._once("field", make)

    def q_field(self):
        def make():
            import numpy as np
            from scipy import interpolate

            from .geometry import radial_bessel_root

            if self.cfg.problem["psi"] == "analytic":
                return radial_bessel_root(self.p, self.cfg.problem["domain"].get("radius", 1.0))[0]
            fld = self.field()
            g = fld.grid
            root = np.maximum(fld.psi_grid, 0.0) ** (1.0 / self.p)
            spline = interpolate.RectBivariateSpline(g.x, g.y, root, kx=3, ky=3)

            def q(x):
                x = np.asarray(x, dtype=float)
                return spline.ev(x[..., 0], x[..., 1])

            return q

        return self._once("q_field", make)

    def curve(self):
        from . import geometry as G

        def make():
            blk = self.cfg.curve
            if blk is None:
                raise ValidationError("config block 'curve' is required for this command")
            ini, m = blk["initial"], int(blk["points"])
            center = tuple(ini.get("center", (0.0, 0.0)))
            if ini["shape"] == "circle":
                pts = G.circle_points(m, float(ini.get("radius", 0.5)), center)
            else:
                pts = G.ellipse_points(m, float(ini.get("a", 0.6)), float(ini.get("b", 0.4)), center, float(ini.get("angle", 0.0)))
            if blk["optimize"]:
                res = G.find_critical_curve(self.matrix_field(), self.q_field(), self.p, pts, tol=blk["tolerance"])
                return res.curve, res.defect, res.iterations
            curve = G.build_curve(pts, self.matrix_field(), self.q_field(), self.p)
            return curve, G.criticality_defect(curve), 0

        return self._once("curve", make)

    def jacobi(self):
        from .geometry import jacobi_coefficients

        return self._once("jacobi", lambda: jacobi_coefficients(self.curve()[0]))

    def layers(self) -> dict:
        if self.cfg.layers is None:
            raise ValidationError("config block 'layers' is required for this command")
        return self.cfg.layers

    def classify(self) -> list[dict]:
        """Per-eps admissibility rows for the configured layer count."""
        from . import toda as T

        def make():
            lay, td = self.layers(), self.cfg.toda
            prof, jc = self.profile(), self.jacobi()
            rows = []
            if lay["N"] >= 2:
                reps = T.resonance_gaps(
                    lay["eps"], T.toda_matrices(lay["N"], self.p), jc.l1, prof.lambda0, jc.l2,
                    td["c1"], td["c2"], td["convention"],
                )
                for r in reps:
                    rows.append({"eps": r.eps, "status": "ok" if r.passes else "resonant", "margin_e41": r.margin_e41, "margin_e108": r.margin_e108})
            else:
                # a single layer has no Toda coupling and no amplitude equation
                rows = [{"eps": e, "status": "ok", "margin_e41": math.inf, "margin_e108": math.inf} for e in lay["eps"]]
            return rows

        return self._once("classify", make)

    def state(self, eps: float):
        from . import toda as T

        lay = self.layers()
        return self._once(
            ("state", eps),
            lambda: T.build_layer_state(
                eps, lay["N"], self.curve()[0], self.jacobi(), self.profile(),
                order=self.cfg.toda["refine_order"], amplitudes=bool(lay["amplitudes"]) and lay["N"] > 1,
            ),
        )

    def ansatz(self, eps: float, order: int):
        from . import assembler as A
        from . import field2d as F

        def make():
            lay = self.layers()
            cfg = A.AnsatzConfig(order=order, delta=lay["delta"], delta0=lay["delta0"])
            branch = self._once(("branch", eps), lambda: F.solve_negative_branch(self.field(), eps, self.p))
            return A.build_ansatz(self.field(), self.curve()[0], self.profile(), self.state(eps), cfg, eps, branch=branch)

        return self._once(("ansatz", eps, order), make)


# ---------------------------------------------------------- commands ---- #
def _partial_profile(p: float):
    """Profile and decay constant alone, for exponents where the companions fail."""
    from .profile1d import ProfileGrid, decay_constant, solve_profile

    grid = ProfileGrid.for_exponent(p)
    w, wx = solve_profile(p, grid)
    return float(w[grid.n // 2]), decay_constant(p, grid, w, wx)


def cmd_profile(pipe: Pipeline, out: OutputDir) -> None:
    from .errors import NumericalError
    from .profile1d import verify_profile_identities

    header = ["p", "status", "w_center", "alpha_fit", "alpha_int", "alpha_gap", "lambda0", "C0", "C1", "identity_max"]
    rows, report = [], {}
    for p in pipe.cfg.profile["exponents"]:
        try:
            prof = pipe.profile(p)
        except NumericalError as exc:
            w0, d = _partial_profile(p)
            nan = math.nan
            rows.append([p, "partial", w0, d.alpha_fit, d.alpha_int, d.relative_gap, nan, nan, nan, nan])
            report[f"{p:g}"] = {"status": "partial", "reason": str(exc), "w_center": w0, "alpha_fit": d.alpha_fit, "alpha_int": d.alpha_int}
            continue
        s = prof.scalars()
        ident = verify_profile_identities(prof)
        worst = max(abs(v) for v in ident.values())
        rows.append([p, "ok", s["w_center"], s["alpha_fit"], s["alpha_int"], s["alpha_gap"], s["lambda0"], s["C0"], s["C1"], worst])
        d = prof.decay
        report[f"{p:g}"] = {
            "status": "ok",
            "scalars": s,
            "identities": ident,
            "decay_sign_variants": {"resolved": d.alpha_int, "plus": d.alpha_printed_plus, "minus": d.alpha_printed_minus, "direct": d.alpha_direct},
        }
    out.csv("profile.csv", header, rows)
    out.json("profile.json", {"exponents": report})


def cmd_geometry(pipe: Pipeline, out: OutputDir) -> None:
    from . import geometry as G

    curve, defect, iters = pipe.curve()
    jc = pipe.jacobi()
    res = G.criticality_residual(curve)
    header = ["theta", "x", "y", "alpha", "beta", "upsilon2", "upsilon1", "upsilon0", "criticality"]
    rows = zip(curve.theta, curve.gamma[:, 0], curve.gamma[:, 1], curve.alpha, curve.beta, jc.upsilon2, jc.upsilon1, jc.upsilon0, res)
    out.csv("geometry.csv", header, rows)
    out.json(
        "geometry.json",
        {
            "length": curve.length, "defect": defect, "iterations": iters, "K": G.functional_K(curve),
            "l1": jc.l1, "l2": jc.l2, "upsilon0_positive": jc.positive,
            "mean_radius": float(sum((curve.gamma**2).sum(1) ** 0.5) / curve.m),
        },
    )


def cmd_field(pipe: Pipeline, out: OutputDir) -> None:
    from . import field2d as F

    fld = pipe.field()
    eps_list = [float(e) for e in pipe.cfg.problem["expansion_eps"]]
    rep = F.verify_negative_expansion(fld, pipe.p, eps_list)
    last = rep.branches[-1]
    pts = fld.grid.interior_points
    out.csv("field.csv", ["x", "y", "psi", "u_neg"], zip(pts[:, 0], pts[:, 1], fld.psi, last.u))
    out.json(
        "field.json",
        {
            "lambda1": fld.lambda1, "residual": fld.residual, "nodes": fld.grid.n_interior, "h": fld.grid.h,
            "expansion": {"eps": rep.eps, "errors": rep.errors, "monotone": rep.monotone, "box_ok": rep.box_ok,
                          "ordering_ok": rep.ordering_ok, "f_max": rep.f_max, "u_neg_eps": last.eps},
        },
    )


def cmd_toda(pipe: Pipeline, out: OutputDir) -> None:
    from . import toda as T
    from .errors import LayerOverlapError

    curve = pipe.curve()[0]
    header = ["eps", "status", "rho", "sigma", "separation", "required", "position_residual", "margin_e41", "margin_e108"]
    rows = []
    for row in pipe.classify():
        eps = row["eps"]
        rs = T.solve_rho(eps, pipe.p, pipe.profile().alpha_p, pipe.profile().C0)
        status, sep, pos = row["status"], math.nan, math.nan
        if status == "ok":
            try:
                st = pipe.state(eps)
                sep = T.separation_check(st, curve.beta)
                pos = float(max(T.jacobi_toda_residual(st, curve, pipe.profile())["position_norm"]))
            except LayerOverlapError:
                status = "overlap"
            except ResonanceError:
                status = "resonant"
        rows.append([eps, status, rs.rho, rs.sigma, sep, T.required_separation(eps, pipe.p), pos, row["margin_e41"], row["margin_e108"]])
    out.csv("toda.csv", header, rows)
    out.json("toda.json", {"N": pipe.layers()["N"], "rows": [dict(zip(header, r)) for r in rows]})


def _admissible(pipe: Pipeline) -> list[float]:
    return [r["eps"] for r in pipe.classify() if r["status"] == "ok"]


def cmd_assemble(pipe: Pipeline, out: OutputDir) -> None:
    from . import assembler as A

    pipe.curve()
    lay = pipe.layers()
    eps_ok = _admissible(pipe)
    if not eps_ok:
        raise ResonanceError("no admissible eps in layers.eps")
    reports = []
    for eps in eps_ok:
        an = pipe.ansatz(eps, lay["order"])
        rep = A.pde_residual(an).to_dict()
        pts = an.grid.interior_points
        out.csv(f"ansatz_eps{eps:g}.csv", ["x", "y", "u", "residual"],
                zip(pts[:, 0], pts[:, 1], an.u, A.grid_residual(an.u, an.eigenfield, eps, an.p)))
        if lay["newton"]:
            nr = A.newton_refine(an)
            rep.update({"newton_iterations": nr.iterations, "newton_history": nr.history, "census": nr.census,
                        "distance_to_ansatz": nr.distance_to_ansatz})
            out.csv(f"solution_eps{eps:g}.csv", ["x", "y", "u", "residual"],
                    zip(pts[:, 0], pts[:, 1], nr.u, A.grid_residual(nr.u, an.eigenfield, eps, an.p)))
        reports.append(rep)
    out.json("assemble.json", {"N": lay["N"], "order": lay["order"], "reports": reports})


def cmd_sweep(pipe: Pipeline, out: OutputDir) -> None:
    from . import assembler as A

    pipe.curve()
    eps_ok = _admissible(pipe)
    rep = A.residual_sweep(eps_ok, lambda eps, order: pipe.ansatz(eps, order))
    norms = {e: (rep.norms[0][i], rep.norms[1][i]) for i, e in enumerate(eps_ok)}
    rows = []
    for row in pipe.classify():
        n0, n1 = norms.get(row["eps"], (math.nan, math.nan))
        rows.append([row["eps"], row["status"], n0, n1])
    out.csv("sweep.csv", ["eps", "status", "order0_tube_l2", "order1_tube_l2"], rows)
    out.json("sweep.json", rep.to_dict())


HANDLERS = {
    "profile": cmd_profile,
    "geometry": cmd_geometry,
    "field": cmd_field,
    "toda": cmd_toda,
    "assemble": cmd_assemble,
    "sweep": cmd_sweep,
}


# ------------------------------------------------------------- entry ---- #
def run(command: str, config: ExperimentConfig, out_dir: Path, threads: int = 1) -> OutputDir:
    """Run one command; on failure every file it wrote is removed."""
    out = OutputDir(out_dir, config.hash)
    out.check_provenance()
    start = time.perf_counter()
    try:
        HANDLERS[command](Pipeline(config), out)
    except BaseException:
        out.discard()
        raise
    out.manifest(command, time.perf_counter() - start, config, threads)
    return out


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clustered-layers", description="Clustered layer experiments")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="YAML experiment file")
    ap.add_argument("--out", default=None, help="output directory (overrides output.directory)")
    ap.add_argument("--threads", type=int, default=1, help="BLAS threads")
    ap.add_argument("--seed", type=int, default=0, help="recorded in the config hash")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return 2
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(args.threads)
    try:
        config = load_config(args.config, args.seed)
        out_dir = Path(args.out or config.output["directory"])
        run(args.command, config, out_dir, args.threads)
    except LayerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
