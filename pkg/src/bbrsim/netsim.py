"""Links, droptail queues, i.i.d. random loss and the dumbbell topology."""

from collections import deque
from dataclasses import dataclass

from .engine import RngStream, US_PER_S

ACCEPTED = "accepted"
DROPPED_TAIL = "dropped_tail"
KEPT = "kept"
DROPPED_RANDOM = "dropped_random"

MIN_QUEUE_BYTES = 1440  # one MTU


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class LinkConfig:
    bandwidth_bps: int
    prop_delay_us: int
    queue_limit_bytes: int
    random_loss_rate: float = 0.0

    def __post_init__(self):
        if self.bandwidth_bps <= 0:
            raise ValueError("bandwidth_bps must be positive")
        if self.prop_delay_us < 0:
            raise ValueError("prop_delay_us must be non-negative")
        if self.queue_limit_bytes < MIN_QUEUE_BYTES:
            raise ValueError(f"queue_limit_bytes must hold at least one MTU ({MIN_QUEUE_BYTES} B)")
        if not 0.0 <= self.random_loss_rate <= 1.0:
            raise ValueError("random_loss_rate must lie in [0, 1]")


def bdp_bytes(bandwidth_bps, delay_us):
    """Bytes in flight for ``bandwidth_bps`` over ``delay_us`` (e.g. 5 Mbps * 100 ms)."""
    return int(bandwidth_bps * delay_us // (8 * US_PER_S))


class Channel:
    """One direction of a link: a byte-limited droptail FIFO feeding a serializer.

    Departure times are computed at enqueue time (``start = max(arrival,
    tx_free)``) so each packet costs a single delivery event. Entries not
    yet fully serialized stay in ``_q`` so the backlog can be pruned lazily
    and so a bandwidth change can re-time packets that have not started.
    """

    def __init__(self, sim, name, bandwidth_bps, prop_delay_us, queue_limit_bytes,
                 random_loss_rate=0.0, rng=None):
        self.sim = sim
        self.name = name
        self.bandwidth_bps = bandwidth_bps
        self.prop_delay_us = prop_delay_us
        self.limit_bytes = queue_limit_bytes
        self.random_loss_rate = random_loss_rate
        self.rng = rng
        self._us_per_byte = 8 * US_PER_S / bandwidth_bps
        # entries: [arrival, start, finish, size, handle, pkt]
        self._q = deque()
        self.tx_free = 0.0
        self.backlog_bytes = 0

        self.packets_in = 0
        self.bytes_in = 0
        self.accepted = 0
        self.delivered = 0
        self.bytes_out = 0
        self.tail_drops = 0
        self.random_drops = 0
        self.max_backlog = 0

    # -- queue state -------------------------------------------------------
    def _prune(self, now):
        q = self._q
        while q and q[0][2] <= now:
            self.backlog_bytes -= q.popleft()[3]

    def backlog_at(self, now):
        self._prune(now)
        return self.backlog_bytes

    def in_system(self):
        """Packets accepted but not yet delivered to the far end."""
        return self.accepted - self.delivered

    def stats(self):
        return {
            "bytes_in": self.bytes_in,
            "bytes_out": self.bytes_out,
            "packets_in": self.packets_in,
            "delivered": self.delivered,
            "tail_drops": self.tail_drops,
            "random_drops": self.random_drops,
            "max_backlog": self.max_backlog,
        }

    def conservation_ok(self):
        return self.packets_in == (self.delivered + self.tail_drops + self.random_drops
                                   + self.in_system())

    # -- operations --------------------------------------------------------
    def apply_random_loss(self, pkt):
        rate = self.random_loss_rate
        if rate <= 0.0 or pkt.is_ack:
            return KEPT
        if rate >= 1.0 or self.rng.random() < rate:
            return DROPPED_RANDOM
        return KEPT

    def enqueue(self, pkt, now):
        size = pkt.size
        q = self._q
        while q and q[0][2] <= now:
            self.backlog_bytes -= q.popleft()[3]
        if self.backlog_bytes + size > self.limit_bytes:
            self.tail_drops += 1
            return DROPPED_TAIL
        start = self.tx_free if self.tx_free > now else now
        finish = start + size * self._us_per_byte
        self.tx_free = finish
        handle = self.sim.schedule(int(finish + self.prop_delay_us + 0.5), self._arrive, pkt)
        q.append([now, start, finish, size, handle, pkt])
        self.backlog_bytes += size
        if self.backlog_bytes > self.max_backlog:
            self.max_backlog = self.backlog_bytes
        self.accepted += 1
        return ACCEPTED

    def send(self, pkt):
        """Ingress: random loss, then droptail enqueue."""
        self.packets_in += 1
        self.bytes_in += pkt.size
        if self.random_loss_rate > 0.0 and self.apply_random_loss(pkt) == DROPPED_RANDOM:
            self.random_drops += 1
            return DROPPED_RANDOM
        return self.enqueue(pkt, self.sim.now)

    def _arrive(self, pkt):
        self.delivered += 1
        self.bytes_out += pkt.size
        pkt.hop += 1
        route = pkt.route
        if pkt.hop < len(route):
            route[pkt.hop].send(pkt)
        else:
            pkt.dest(pkt)

    def set_bandwidth(self, new_bps, at=None):
        """Change the serialization rate at time ``at`` (default: now)."""
        if new_bps <= 0:
            raise ValueError("bandwidth must be positive")
        now = self.sim.now
        if at is None or at <= now:
            self._apply_bandwidth(new_bps)
        else:
            self.sim.schedule(at, self._apply_bandwidth, new_bps)

    def _apply_bandwidth(self, new_bps):
        now = self.sim.now
        self._prune(now)
        self.bandwidth_bps = new_bps
        self._us_per_byte = 8 * US_PER_S / new_bps
        prev_finish = None
        for entry in self._q:
            arrival, start, finish, size, handle, pkt = entry
            if start < now:
                # serialization already under way; finishes at the old rate
                prev_finish = finish
                continue
            start = arrival if prev_finish is None or arrival > prev_finish else prev_finish
            if start < now:
                start = now
            finish = start + size * self._us_per_byte
            self.sim.cancel(handle)
            entry[1] = start
            entry[2] = finish
            entry[4] = self.sim.schedule(int(finish + self.prop_delay_us + 0.5), self._arrive, pkt)
            prev_finish = finish
        self.tx_free = prev_finish if prev_finish is not None else min(self.tx_free, now)


class Link:
    """Bidirectional link: two independent channels sharing one config."""

    def __init__(self, sim, name, a, b, config, seed=0, stream_id=0, lossy_direction=True):
        self.name = name
        self.a = a
        self.b = b
        self.config = config
        rng = RngStream(seed, stream_id) if config.random_loss_rate > 0 else None
        loss = config.random_loss_rate if lossy_direction else 0.0
        self.forward = Channel(sim, f"{name}:{a}->{b}", config.bandwidth_bps,
                               config.prop_delay_us, config.queue_limit_bytes, loss, rng)
        # reverse direction carries ACKs and is never randomly lossy
        self.reverse = Channel(sim, f"{name}:{b}->{a}", config.bandwidth_bps,
                               config.prop_delay_us, config.queue_limit_bytes, 0.0, None)

    def channel(self, src, dst):
        if (src, dst) == (self.a, self.b):
            return self.forward
        if (src, dst) == (self.b, self.a):
            return self.reverse
        raise TopologyError(f"link {self.name} does not join {src} and {dst}")

    def set_bandwidth(self, new_bps, at=None):
        self.forward.set_bandwidth(new_bps, at)
        self.reverse.set_bandwidth(new_bps, at)

    def channels(self):
        return (self.forward, self.reverse)


DUMBBELL_NODES = ("n0", "n1", "n2", "n3", "n4", "n5")
DUMBBELL_LINKS = {
    "l1": ("n0", "n2"),
    "l3": ("n1", "n2"),
    "l2": ("n2", "n3"),
    "l4": ("n3", "n4"),
    "l5": ("n3", "n5"),
}
SIDE_LINKS = ("l1", "l3", "l4", "l5")
BOTTLENECK = "l2"


class Topology:
    def __init__(self, sim, nodes, links, paths):
        self.sim = sim
        self.nodes = tuple(nodes)
        self.links = links
        self._by_ends = {}
        for link in links.values():
            self._by_ends[(link.a, link.b)] = link
            self._by_ends[(link.b, link.a)] = link
        self.paths = {}
        self._routes = {}
        for flow_id, path in paths.items():
            nodes_path = self._resolve_path(path)
            self.paths[flow_id] = nodes_path
            fwd = tuple(self._hop(u, v) for u, v in zip(nodes_path, nodes_path[1:]))
            rev_nodes = nodes_path[::-1]
            rev = tuple(self._hop(u, v) for u, v in zip(rev_nodes, rev_nodes[1:]))
            self._routes[flow_id] = (fwd, rev)

    def _hop(self, u, v):
        link = self._by_ends.get((u, v))
        if link is None:
            raise TopologyError(f"no link between {u} and {v}")
        return link.channel(u, v)

    def _resolve_path(self, path):
        path = list(path)
        if len(path) < 1:
            raise TopologyError("empty path")
        if all(p in self.links or (isinstance(p, str) and p.startswith("l")) for p in path):
            return self._links_to_nodes(path)
        for node in path:
            if node not in self.nodes:
                raise TopologyError(f"unknown node {node!r}")
        if len(path) < 2:
            raise TopologyError("a path needs at least two nodes")
        return path

    def _links_to_nodes(self, names):
        links = []
        for name in names:
            if name not in self.links:
                raise TopologyError(f"unknown link {name!r}")
            links.append(self.links[name])
        if len(links) == 1:
            return [links[0].a, links[0].b]
        first, second = links[0], links[1]
        shared = {first.a, first.b} & {second.a, second.b}
        if not shared:
            raise TopologyError(f"links {first.name} and {second.name} are not adjacent")
        cur = shared.pop()
        nodes = [first.b if cur == first.a else first.a, cur]
        for link in links[1:]:
            if cur not in (link.a, link.b):
                raise TopologyError(f"link {link.name} does not continue the path at {cur}")
            cur = link.b if cur == link.a else link.a
            nodes.append(cur)
        return nodes

    def route(self, flow_id):
        """Forward (data) channel sequence for a flow."""
        return self._routes[flow_id][0]

    def reverse_route(self, flow_id):
        """Reverse (ACK) channel sequence for a flow."""
        return self._routes[flow_id][1]

    def path_prop_delay_us(self, flow_id):
        return sum(ch.prop_delay_us for ch in self.route(flow_id))

    def channels(self):
        for link in self.links.values():
            yield from link.channels()


def build_dumbbell(sim, bottleneck, side_links, paths, seed=0):
    """Build the six-node dumbbell of n0,n1 -> n2 == n3 -> n4,n5.

    ``side_links`` maps each of l1, l3, l4, l5 to a LinkConfig (a single
    LinkConfig is applied to all four). Side links must be strictly faster
    than the bottleneck. ``paths`` maps flow id to a node list such as
    ``["n0", "n2", "n3", "n4"]`` or a link-name list such as
    ``["l1", "l2", "l4"]``; every path must cross l2 exactly once.
    """
    if isinstance(side_links, LinkConfig):
        side_links = {name: side_links for name in SIDE_LINKS}
    side_links = dict(side_links)
    links = {}
    for stream_id, (name, (a, b)) in enumerate(DUMBBELL_LINKS.items()):
        if name == BOTTLENECK:
            cfg = bottleneck
        else:
            cfg = side_links.get(name)
            if cfg is None:
                continue
            if cfg.bandwidth_bps <= bottleneck.bandwidth_bps:
                raise TopologyError(f"side link {name} must be faster than the bottleneck")
        links[name] = Link(sim, name, a, b, cfg, seed=seed, stream_id=stream_id)
    topo = Topology(sim, DUMBBELL_NODES, links, paths)
    l2 = links[BOTTLENECK]
    for flow_id in topo.paths:
        crossings = sum(1 for ch in topo.route(flow_id) if ch is l2.forward or ch is l2.reverse)
        if crossings != 1:
            raise TopologyError(f"flow {flow_id} must cross l2 exactly once")
    return topo
