"""Network layout: star around the hub, or range-limited placement in an area."""

from __future__ import annotations

import math
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .config import ScenarioConfig, resolve_devices
from .traffic import DeviceClass
from .trust import KbtProfile


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class NodeInfo:
    id: str
    device_class: DeviceClass
    position: tuple[float, float]
    criticality: str
    is_malicious: bool
    kbt: KbtProfile
    service_rate: float
    buffer: int


@dataclass(frozen=True)
class Topology:
    nodes: tuple[NodeInfo, ...]
    mode: str
    hub: int
    edges: tuple[tuple[int, int], ...]
    link_rate: float
    hub_link_rate: float

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def index(self) -> dict[str, int]:
        return {node.id: i for i, node in enumerate(self.nodes)}

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.nodes]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return [sorted(x) for x in adj]

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g

    def malicious(self) -> list[str]:
        return [node.id for node in self.nodes if node.is_malicious]

    def benign(self) -> list[str]:
        return [node.id for i, node in enumerate(self.nodes) if not node.is_malicious and i != self.hub]


def _range_edges(pos: np.ndarray, comm_range: float) -> list[tuple[int, int]]:
    edges = []
    for a in range(len(pos)):
        for b in range(a + 1, len(pos)):
            if math.dist(pos[a], pos[b]) <= comm_range:
                edges.append((a, b))
    return edges


def _connected(n: int, edges: list[tuple[int, int]]) -> bool:
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(edges)
    return nx.is_connected(g)


def build_topology(config: ScenarioConfig, rng: np.random.Generator) -> Topology:
    devices = resolve_devices(config)
    if len(devices) < 2:
        raise TopologyError("need at least two nodes")
    topo = config.topology
    attackers = {a.attacker for a in config.attacks}
    n = len(devices)
    width, height = topo.area

    if topo.mode == "star":
        angles = np.linspace(0.0, 2 * math.pi, n - 1, endpoint=False)
        radius = min(topo.comm_range, width / 2, height / 2) * 0.9
        pos = np.empty((n, 2))
        pos[0] = (width / 2, height / 2)
        pos[1:, 0] = width / 2 + radius * np.cos(angles)
        pos[1:, 1] = height / 2 + radius * np.sin(angles)
        for i, d in enumerate(devices):
            if d.position is not None:
                pos[i] = d.position
        edges = [(0, i) for i in range(1, n)]
    else:
        fixed = [d.position for d in devices]
        # fully pinned layouts get a single attempt since nothing is random
        attempts = 1 if all(p is not None for p in fixed) else topo.max_attempts
        for _ in range(attempts):
            pos = rng.uniform((0.0, 0.0), (width, height), size=(n, 2))
            for i, p in enumerate(fixed):
                if p is not None:
                    pos[i] = p
            edges = _range_edges(pos, topo.comm_range)
            if _connected(n, edges):
                break
        else:
            raise TopologyError(
                f"could not place {n} nodes connected within {topo.comm_range} m after "
                f"{attempts} attempts; increase comm_range or reduce node count"
            )

    nodes = []
    for i, d in enumerate(devices):
        cls = config.classes[d.device_class.value]
        nodes.append(
            NodeInfo(
                id=d.id,
                device_class=d.device_class,
                position=(float(pos[i, 0]), float(pos[i, 1])),
                criticality=d.criticality or cls.criticality,
                is_malicious=d.id in attackers,
                kbt=d.kbt or cls.kbt,
                service_rate=cls.service_rate,
                buffer=cls.buffer,
            )
        )
    return Topology(
        nodes=tuple(nodes),
        mode=topo.mode,
        hub=0,
        edges=tuple(edges),
        link_rate=topo.link_rate,
        hub_link_rate=topo.hub_link_rate,
    )
