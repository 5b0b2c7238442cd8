"""
Problem definition files.

A problem is a TOML document with the sections ``[domain]``, ``[sources]``,
``[control]``, ``[target]``, ``[nonlinearity]``, ``[tolerances]`` and
``[study]`` plus a top-level ``seed``. ``parse_spec`` validates it into a
``ProblemSpec`` and reports every violated invariant at once.
"""

import logging
import math
import sys
import threading
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
import tomli_w
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..control.reduced import ControlProblem
from ..control.types import ControlBounds
from ..errors import InvalidPolygon, ParseError, ValidationError
from ..fem.assembly import Field as FemField
from ..fem.mesh import TriMesh, box_mesh, polygon_contains, refine_uniform, triangulate_polygon, validate_convex_polygon
from ..fem.norms import Subdomain
from ..fem.space import load_fe_function
from ..solvers.nonlinearity import NONLINEARITY_REGISTRY, Nonlinearity, make_nonlinearity
from .config import TolerancesConfig


logger = logging.getLogger(__name__)

QUANTITIES = ("state_l2", "state_l1", "adjoint_linf", "gradient_gap", "control_err")

# Names available inside y_d expressions.
_EXPRESSION_NAMESPACE = {
    name: getattr(np, name)
    for name in (
        "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "arctan", "arcsin", "arccos",
        "sinh", "cosh", "tanh", "minimum", "maximum", "where", "pi", "e",
    )
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainSpec(_Section):
    """Convex polygon in 2-D or axis-aligned box in 3-D."""
    dimension: Literal[2, 3] = 2
    polygon: Optional[List[List[float]]] = None
    box_lower: Optional[List[float]] = None
    box_upper: Optional[List[float]] = None


class SourcesSpec(_Section):
    points: List[List[float]]


class ControlSpec(_Section):
    alpha: float
    lower: Union[float, List[float]]
    upper: Union[float, List[float]]
    initial: Optional[List[float]] = None
    fixed: Optional[List[float]] = None


class TargetSpec(_Section):
    """Desired state y_d."""
    kind: Literal["constant", "expression", "fe_file"] = "constant"
    value: Optional[float] = None
    expression: Optional[str] = None
    path: Optional[str] = None


class NonlinearitySpec(_Section):
    name: str = "cubic"
    parameters: Dict[str, float] = Field(default_factory=dict)


class TolerancesSpec(_Section):
    """Unset entries fall back to the ``tolerances`` block of defaults.yaml."""
    tol_lin: Optional[float] = None
    tol_newton: Optional[float] = None
    tol_kkt: Optional[float] = None


class SubdomainSpec(_Section):
    """Region of the maximum-norm errors: ``scaled``, ``polygon``, ``disk`` or ``box``."""
    kind: Literal["scaled", "polygon", "disk", "box"] = "scaled"
    fraction: float = 0.5
    polygon: Optional[List[List[float]]] = None
    center: Optional[List[float]] = None
    radius: Optional[float] = None
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None


class StudySpec(_Section):
    levels: List[int] = Field(default_factory=lambda: [3, 4, 5, 6, 7])
    reference_level: Optional[int] = None
    quantities: List[str] = Field(default_factory=lambda: list(QUANTITIES))
    subdomain: SubdomainSpec = Field(default_factory=SubdomainSpec)
    localize_radius: Optional[float] = None


class ProblemSpec(_Section):
    """A validated problem definition."""
    seed: int = 0
    domain: DomainSpec
    sources: SourcesSpec
    control: ControlSpec
    target: TargetSpec = Field(default_factory=lambda: TargetSpec(kind="constant", value=0.0))
    nonlinearity: NonlinearitySpec = Field(default_factory=NonlinearitySpec)
    tolerances: TolerancesSpec = Field(default_factory=TolerancesSpec)
    study: StudySpec = Field(default_factory=StudySpec)

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def count(self) -> int:
        return len(self.sources.points)

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.sources.points, dtype=float)

    @property
    def reference_level(self) -> int:
        if self.study.reference_level is not None:
            return self.study.reference_level
        return max(self.study.levels) + 2

    def bounds(self) -> ControlBounds:
        lower = np.broadcast_to(np.asarray(self.control.lower, dtype=float), (self.count,))
        upper = np.broadcast_to(np.asarray(self.control.upper, dtype=float), (self.count,))
        return ControlBounds(lower, upper)

    def make_nonlinearity(self) -> Nonlinearity:
        return make_nonlinearity(self.nonlinearity.name, self.nonlinearity.parameters)

    def fixed_control(self) -> np.ndarray:
        """Control used by the state, adjoint and gradient studies; clamp(1) if unset."""
        if self.control.fixed is not None:
            return np.asarray(self.control.fixed, dtype=float)
        return self.bounds().project(np.ones(self.count))

    def initial_control(self) -> np.ndarray:
        if self.control.initial is not None:
            return self.bounds().project(self.control.initial)
        return self.bounds().project(np.zeros(self.count))

    def target_field(self, meshes: Optional["MeshHierarchy"] = None) -> FemField:
        """y_d as a constant, a callable of the coordinates, or a P1 function."""
        target = self.target
        if target.kind == "constant":
            return float(target.value or 0.0)
        if target.kind == "expression":
            return _compile_expression(target.expression, self.dimension)
        meshes = meshes or MeshHierarchy(self)
        return load_fe_function(target.path, meshes.get)

    def effective_tolerances(self, defaults: Optional[TolerancesConfig] = None) -> Dict[str, float]:
        """Tolerances of this problem, unset entries taken from ``defaults``."""
        defaults = defaults or TolerancesConfig()
        return {
            name: getattr(self.tolerances, name) if getattr(self.tolerances, name) is not None else getattr(defaults, name)
            for name in ("tol_lin", "tol_newton", "tol_kkt")
        }

    def control_problem(
        self,
        meshes: Optional["MeshHierarchy"] = None,
        tolerances: Optional[TolerancesConfig] = None,
        **limits: Any,
    ) -> ControlProblem:
        """
        Control problem data.

        Args:
            meshes: Mesh hierarchy for ``fe_file`` targets
            tolerances: defaults.yaml tolerances used where the problem file sets none
            limits: max_newton_iter, max_halvings or cg_max_iter
        """
        return ControlProblem(
            points=self.points,
            bounds=self.bounds(),
            alpha=self.control.alpha,
            y_d=self.target_field(meshes),
            nl=self.make_nonlinearity(),
            **self.effective_tolerances(tolerances),
            **limits,
        )

    def subdomain(self, mesh: TriMesh) -> Subdomain:
        sub = self.study.subdomain
        if sub.kind == "polygon":
            return Subdomain.from_polygon(sub.polygon)
        if sub.kind == "disk":
            return Subdomain.disk(sub.center, sub.radius)
        if sub.kind == "box":
            return Subdomain(box=(tuple(sub.lower), tuple(sub.upper)))
        return Subdomain.scaled(mesh, sub.fraction)


class MeshHierarchy:
    """Nested meshes of one domain, built on demand and shared between levels."""

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self._meshes: Dict[int, TriMesh] = {}
        self._lock = threading.Lock()

    def get(self, level: int) -> TriMesh:
        if level < 0:
            raise ValueError(f"Mesh level must be nonnegative, got {level}")
        with self._lock:
            if level in self._meshes:
                return self._meshes[level]
            domain = self.spec.domain
            if domain.dimension == 3:
                mesh = box_mesh(domain.box_lower, domain.box_upper, level)
            else:
                coarser = [lvl for lvl in self._meshes if lvl < level]
                start = max(coarser) if coarser else 0
                mesh = self._meshes.get(start) or triangulate_polygon(domain.polygon)
                self._meshes.setdefault(start, mesh)
                for lvl in range(start + 1, level + 1):
                    mesh = refine_uniform(mesh)
                    self._meshes[lvl] = mesh
            self._meshes[level] = mesh
            return mesh


def _compile_expression(expression: str, dimension: int):
    code = compile(expression, "<y_d>", "eval")
    allowed = set(_EXPRESSION_NAMESPACE) | {"x", "y", "z"}
    unknown = [name for name in code.co_names if name not in allowed]
    if unknown:
        raise ValueError(f"Unknown name(s) in target expression: {', '.join(unknown)}")

    def field(points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        scope = dict(_EXPRESSION_NAMESPACE)
        scope.update(x=pts[..., 0], y=pts[..., 1], z=pts[..., 2] if dimension == 3 else 0.0)
        value = eval(code, {"__builtins__": {}}, scope)
        return np.broadcast_to(np.asarray(value, dtype=float), pts.shape[:-1])

    return field


def _collect_violations(spec: ProblemSpec) -> List[str]:
    """All invariant violations of a structurally valid spec."""
    problems: List[str] = []
    dim = spec.domain.dimension
    domain = spec.domain
    polygon = None

    if dim == 2:
        if domain.polygon is None:
            problems.append("domain.polygon: required for dimension 2")
        elif domain.box_lower is not None or domain.box_upper is not None:
            problems.append("domain: dimension 2 takes a polygon, not a box")
        else:
            try:
                polygon = validate_convex_polygon(domain.polygon)
            except (InvalidPolygon, ValueError) as e:
                problems.append(f"domain.polygon: {e}")
    else:
        if domain.polygon is not None:
            problems.append("domain: dimension 3 is restricted to box domains")
        if domain.box_lower is None or domain.box_upper is None:
            problems.append("domain.box_lower/box_upper: required for dimension 3")
        elif len(domain.box_lower) != 3 or len(domain.box_upper) != 3:
            problems.append("domain.box_lower/box_upper: need three coordinates each")
        elif not all(lo < hi for lo, hi in zip(domain.box_lower, domain.box_upper)):
            problems.append("domain.box_lower/box_upper: lower corner must be below upper corner")

    points = spec.sources.points
    if not points:
        problems.append("sources.points: at least one source point is required")
    for index, point in enumerate(points):
        if len(point) != dim:
            problems.append(f"sources.points[{index}]: expected {dim} coordinates, got {len(point)}")
            continue
        if not all(math.isfinite(c) for c in point):
            problems.append(f"sources.points[{index}]: coordinates must be finite")
            continue
        inside = True
        if polygon is not None:
            inside = bool(polygon_contains(polygon, np.asarray([point]), margin=1e-10)[0])
        elif dim == 3 and domain.box_lower is not None and domain.box_upper is not None:
            inside = all(lo + 1e-10 < c < hi - 1e-10 for c, lo, hi in zip(point, domain.box_lower, domain.box_upper))
        if not inside:
            problems.append(f"sources.points[{index}]: {tuple(point)} is not strictly inside the domain")
    if len({tuple(p) for p in points}) != len(points):
        problems.append("sources.points: source points must be distinct")

    control = spec.control
    if not control.alpha > 0.0:
        problems.append(f"control.alpha: regularization parameter alpha must be > 0, got {control.alpha}")
    count = len(points)
    for name in ("lower", "upper", "initial", "fixed"):
        value = getattr(control, name)
        if isinstance(value, list) and len(value) != count:
            problems.append(f"control.{name}: expected {count} entries, got {len(value)}")
    try:
        lower = np.broadcast_to(np.asarray(control.lower, dtype=float), (count,))
        upper = np.broadcast_to(np.asarray(control.upper, dtype=float), (count,))
        for index in np.flatnonzero(~(lower < upper)):
            problems.append(
                f"control.lower/upper[{index}]: need a_z < b_z, got {lower[index]} >= {upper[index]}"
            )
    except ValueError:
        pass

    target = spec.target
    if target.kind == "constant" and target.value is None:
        problems.append("target.value: required for kind 'constant'")
    if target.kind == "expression":
        if not target.expression:
            problems.append("target.expression: required for kind 'expression'")
        else:
            try:
                _compile_expression(target.expression, dim)
            except (SyntaxError, ValueError) as e:
                problems.append(f"target.expression: {e}")
    if target.kind == "fe_file":
        if not target.path:
            problems.append("target.path: required for kind 'fe_file'")
        elif not Path(target.path).exists():
            problems.append(f"target.path: file not found: {target.path}")

    nl_spec = spec.nonlinearity
    if nl_spec.name not in NONLINEARITY_REGISTRY:
        problems.append(
            f"nonlinearity.name: unknown '{nl_spec.name}', available: {', '.join(sorted(NONLINEARITY_REGISTRY))}"
        )
    else:
        unknown = set(nl_spec.parameters) - {"coefficient"}
        if unknown:
            problems.append(f"nonlinearity.parameters: unknown parameter(s) {', '.join(sorted(unknown))}")
        try:
            nl = make_nonlinearity(nl_spec.name, nl_spec.parameters)
            if not nl.admissible_for_dimension(dim):
                problems.append(
                    f"nonlinearity.name: '{nl_spec.name}' grows too fast for dimension {dim} "
                    f"(growth of a, a_y, a_yy = {nl.growth['a']}, {nl.growth['a_y']}, {nl.growth['a_yy']})"
                )
        except ValueError as e:
            problems.append(f"nonlinearity.parameters: {e}")

    for name in ("tol_lin", "tol_newton", "tol_kkt"):
        value = getattr(spec.tolerances, name)
        if value is not None and not value > 0.0:
            problems.append(f"tolerances.{name}: must be positive")

    study = spec.study
    if not study.levels:
        problems.append("study.levels: at least one level is required")
    elif min(study.levels) < 0:
        problems.append("study.levels: levels must be nonnegative")
    elif study.reference_level is not None and study.reference_level < max(study.levels) + 2:
        problems.append(
            f"study.reference_level: must be at least max(levels) + 2 = {max(study.levels) + 2}, "
            f"got {study.reference_level}"
        )
    bad = [q for q in study.quantities if q not in QUANTITIES]
    if bad:
        problems.append(f"study.quantities: unknown {', '.join(bad)}; choose from {', '.join(QUANTITIES)}")
    if study.localize_radius is not None and study.localize_radius <= 0.0:
        problems.append("study.localize_radius: must be positive")
    problems.extend(_subdomain_violations(spec, polygon))
    return problems


def _subdomain_violations(spec: ProblemSpec, polygon: Optional[np.ndarray]) -> List[str]:
    sub = spec.study.subdomain
    dim = spec.domain.dimension
    if sub.kind == "scaled":
        if not 0.0 < sub.fraction < 1.0:
            return [f"study.subdomain.fraction: must lie in (0, 1), got {sub.fraction}"]
        if polygon is None and dim == 2:
            return []
        region = None
        if polygon is not None:
            centroid = polygon.mean(axis=0)
            region = Subdomain(polygon=centroid + sub.fraction * (polygon - centroid))
        elif spec.domain.box_lower is not None and spec.domain.box_upper is not None:
            lo, hi = np.asarray(spec.domain.box_lower), np.asarray(spec.domain.box_upper)
            mid, half = 0.5 * (lo + hi), 0.5 * sub.fraction * (hi - lo)
            region = Subdomain(box=(tuple(mid - half), tuple(mid + half)))
    else:
        try:
            if sub.kind == "polygon":
                region = Subdomain.from_polygon(sub.polygon or [])
            elif sub.kind == "disk":
                if sub.center is None or sub.radius is None:
                    return ["study.subdomain: a disk needs center and radius"]
                region = Subdomain.disk(sub.center, sub.radius)
            else:
                if sub.lower is None or sub.upper is None:
                    return ["study.subdomain: a box needs lower and upper"]
                region = Subdomain(box=(tuple(sub.lower), tuple(sub.upper)))
        except (InvalidPolygon, ValueError) as e:
            return [f"study.subdomain: {e}"]
    if region is None:
        return []

    problems = []
    inside = region.contains(np.asarray(spec.sources.points, dtype=float).reshape(-1, dim))
    for index in np.flatnonzero(~inside):
        problems.append(f"study.subdomain: source point {index} is not inside the subdomain")
    if polygon is not None and region.polygon is not None:
        if not np.all(polygon_contains(polygon, region.polygon, margin=1e-12)):
            problems.append("study.subdomain: must keep a positive distance to the domain boundary")
    elif polygon is not None and region.center is not None:
        if not polygon_contains(polygon, np.asarray(region.center)[None, :], margin=region.radius + 1e-12)[0]:
            problems.append("study.subdomain: must keep a positive distance to the domain boundary")
    elif region.box is not None and spec.domain.box_lower is not None and spec.domain.box_upper is not None:
        lo, hi = np.asarray(spec.domain.box_lower), np.asarray(spec.domain.box_upper)
        if not (np.all(np.asarray(region.box[0]) > lo) and np.all(np.asarray(region.box[1]) < hi)):
            problems.append("study.subdomain: must keep a positive distance to the domain boundary")
    return problems


def validate_spec_data(data: Dict[str, Any], base_dir: Optional[Path] = None) -> ProblemSpec:
    """
    Validate a decoded problem document.

    Args:
        data: Decoded TOML mapping
        base_dir: Directory that relative ``target.path`` entries refer to

    Returns:
        ProblemSpec

    Raises:
        ValidationError: With every violation found
    """
    try:
        spec = ProblemSpec.model_validate(data)
    except PydanticValidationError as e:
        raise ValidationError(
            [f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in e.errors()]
        ) from None

    if spec.target.kind == "fe_file" and spec.target.path and base_dir is not None:
        path = Path(spec.target.path)
        if not path.is_absolute():
            spec.target.path = str((base_dir / path).resolve())

    problems = _collect_violations(spec)
    if problems:
        raise ValidationError(problems)
    return spec


def parse_spec(path: Union[str, Path]) -> ProblemSpec:
    """
    Read and validate a TOML problem file.

    Raises:
        FileNotFoundError: If the file does not exist
        ParseError: If the file is not valid TOML
        ValidationError: With every violation found
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Problem file not found: {path}")
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ParseError(f"{path}: {e}") from e
    spec = validate_spec_data(data, base_dir=path.parent)
    logger.debug(f"Parsed problem {path}: {spec.count} source(s), dimension {spec.dimension}")
    return spec


def parse_spec_text(text: str, base_dir: Optional[Path] = None) -> ProblemSpec:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ParseError(str(e)) from e
    return validate_spec_data(data, base_dir=base_dir)


def emit_spec(spec: ProblemSpec) -> str:
    """Serialize a spec to TOML text that ``parse_spec`` reads back unchanged."""
    return tomli_w.dumps(spec.model_dump(exclude_none=True))


def write_spec(spec: ProblemSpec, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(emit_spec(spec), encoding="utf-8")
    return path
