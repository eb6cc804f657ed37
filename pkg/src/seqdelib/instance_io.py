"""JSON instance files and named instance generators.

An instance file is a JSON object with either ``{"points": n, "edges":
[[i, j, w], ...]}`` or ``{"dist": [[...], ...]}``, plus ``{"agents":
[[point, weight], ...]}``.  Graphs whose edges all have weight 1 are loaded
as unit graphs, and as median graphs when they qualify.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from seqdelib import distortion_lab as lab
from seqdelib import median_graph as mg
from seqdelib.metric_core import AgentProfile, DomainError, FiniteMetric, metric_from_weighted_graph


class InstanceError(ValueError):
    """Malformed instance file or generator spec."""


@dataclass(frozen=True, eq=False)
class Instance:
    name: str
    space: Union[mg.MedianGraph, FiniteMetric, None]
    profile: Optional[AgentProfile]
    graph: Optional[mg.UnitGraph] = None  # the unit graph, median or not
    simplex: Optional[lab.SimplexInstance] = None

    @property
    def is_median(self) -> bool:
        return isinstance(self.space, mg.MedianGraph)

    def metric(self) -> FiniteMetric:
        if self.space is None:
            raise InstanceError("simplex instances have no finite metric")
        return self.space.metric() if isinstance(self.space, mg.UnitGraph) else self.space

    def require_profile(self) -> AgentProfile:
        if self.profile is None:
            raise InstanceError(f"instance {self.name!r} has no agents")
        return self.profile


def _unit_graph(n: int, edges) -> mg.UnitGraph:
    g = mg.UnitGraph(n, edges)
    if mg.verify_median_graph(g):
        return mg.MedianGraph(n, g.edges, check=False)
    return g


def _profile(data: dict, n: int) -> Optional[AgentProfile]:
    if "agents" not in data:
        return None
    try:
        prof = AgentProfile.from_pairs(data["agents"])
    except (TypeError, ValueError) as exc:
        raise InstanceError(f"bad agents list: {exc}") from exc
    if prof.points.max() >= n:
        raise InstanceError(f"agent bliss point {int(prof.points.max())} outside 0..{n - 1}")
    return prof


def instance_from_dict(data: dict, name: str = "instance") -> Instance:
    if not isinstance(data, dict):
        raise InstanceError("instance must be a JSON object")
    try:
        if "dist" in data:
            metric = FiniteMetric.from_table(np.array(data["dist"], dtype=float))
            return Instance(name, metric, _profile(data, metric.n))
        if "edges" in data:
            n = int(data["points"])
            edges = [tuple(e) for e in data["edges"]]
            if any(len(e) != 3 for e in edges):
                raise InstanceError("edges must be [i, j, weight] triples")
            if all(float(e[2]) == 1.0 for e in edges):
                g = _unit_graph(n, [(int(e[0]), int(e[1])) for e in edges])
                space = g if isinstance(g, mg.MedianGraph) else g.metric()
                return Instance(name, space, _profile(data, n), graph=g)
            return Instance(name, metric_from_weighted_graph(edges, n), _profile(data, n))
    except DomainError as exc:
        raise InstanceError(str(exc)) from exc
    except (TypeError, ValueError, KeyError) as exc:
        raise InstanceError(f"malformed instance: {exc}") from exc
    raise InstanceError('instance needs "dist" or "points" and "edges"')


def load_instance(path: Union[str, Path]) -> Instance:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise InstanceError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path} is not valid JSON: {exc}") from exc
    return instance_from_dict(data, path.stem)


def instance_to_dict(space: Union[mg.UnitGraph, FiniteMetric], profile: Optional[AgentProfile] = None) -> dict:
    if isinstance(space, mg.UnitGraph):
        out: dict = {"points": space.n, "edges": [[u, v, 1] for u, v in space.edges]}
    else:
        out = {"dist": space.dist.tolist()}
    if profile is not None:
        out["agents"] = [list(p) for p in profile.pairs()]
    return out


def save_instance(path: Union[str, Path], space, profile: Optional[AgentProfile] = None) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(space, profile)) + "\n")


# -- named generators -----------------------------------------------------------


def parse_generator(spec: str) -> tuple[str, dict[str, str]]:
    """Split ``name:key=value,key=value`` into a name and raw parameters."""
    name, _, rest = spec.partition(":")
    params: dict[str, str] = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise InstanceError(f"generator parameter {item!r} is not key=value")
        params[key.strip()] = value.strip()
    return name.strip(), params


def _random_agents(n_points: int, params: dict, seed: int) -> AgentProfile:
    agents = int(params.get("agents", 5))
    if agents < 1:
        raise InstanceError("agents must be >= 1")
    rng = np.random.default_rng([seed, 1])
    return AgentProfile(rng.integers(0, n_points, agents), rng.integers(1, int(params.get("maxw", 1)) + 1, agents))


GENERATORS = (
    "kstar:k=",
    "two-point:f=",
    "star-shortcut:n=,eps=",
    "grid:w=,h=,agents=,seed=",
    "tree:n=,agents=,seed=",
    "hypercube:dim=,agents=,seed=",
    "grid-closure:",
    "random-metric:n=,kind=,agents=,seed=",
    "eps-unanimous:n=,eps=,seed=",
    "simplex:p=a/b/c",
)


def _build(name: str, params: dict) -> Instance:
    seed = int(params.get("seed", 0))
    if name == "kstar":
        g, prof = lab.kstar_instance(int(params.get("k", 3)))
        return Instance(f"kstar{g.n - 1}", g, prof, graph=g)
    if name == "two-point":
        g = lab.two_point_space()
        return Instance("two-point", g, lab.fraction_profile(float(params.get("f", 0.25))), graph=g)
    if name == "star-shortcut":
        n, eps = int(params.get("n", 10)), float(params.get("eps", 0.01))
        space, prof = lab.metric_star_shortcut_instance(n, eps)
        return Instance(f"star-shortcut{n}", space, prof)
    if name == "grid":
        g = mg.grid(int(params.get("w", 3)), int(params.get("h", 3)))
        return Instance("grid", g, _random_agents(g.n, params, seed), graph=g)
    if name == "tree":
        g = mg.random_tree(int(params.get("n", 10)), seed)
        return Instance("tree", g, _random_agents(g.n, params, seed), graph=g)
    if name == "hypercube":
        g = mg.hypercube(int(params.get("dim", 3)))
        return Instance("hypercube", g, _random_agents(g.n, params, seed), graph=g)
    if name == "grid-closure":
        g, prof = mg.grid_closure_example()
        return Instance("grid-closure", g, prof, graph=g)
    if name == "random-metric":
        n = int(params.get("n", 10))
        space = lab.random_finite_metric(n, seed, params.get("kind", "euclidean"))
        return Instance("random-metric", space, _random_agents(n, params, seed))
    if name == "eps-unanimous":
        g = mg.random_tree(int(params.get("n", 10)), seed)
        return Instance("eps-unanimous", g, lab.epsilon_unanimous_instance(g, float(params.get("eps", 0.05))), graph=g)
    if name == "simplex":
        p = [float(x) for x in params.get("p", "0.5/0.25/0.25").split("/")]
        return Instance("simplex", None, None, simplex=lab.SimplexInstance(np.array(p)))
    raise InstanceError(f"unknown generator {name!r}; known: {', '.join(g.split(':')[0] for g in GENERATORS)}")


def generate_instance(spec: str) -> Instance:
    name, params = parse_generator(spec)
    try:
        return _build(name, params)
    except DomainError as exc:
        raise InstanceError(str(exc)) from exc
    except ValueError as exc:
        if isinstance(exc, InstanceError):
            raise
        raise InstanceError(f"bad generator parameters {spec!r}: {exc}") from exc
