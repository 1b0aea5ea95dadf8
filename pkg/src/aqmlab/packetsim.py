"""Discrete-event packet-level simulator: window-based sources (Compound,
Reno, CUBIC), constant-rate and short-flow generators, RED / threshold /
drop-tail queues, and dumbbell or two-hop parking-lot topologies.

One run is a strict total order of events (ties broken by insertion order),
fully determined by the configuration and seed. The RED drop decision is a
per-arrival Bernoulli draw on the exponentially weighted average queue, which
is the law the fluid analysis assumes; the classic count-based drop spreading
is deliberately not reproduced.
"""

from __future__ import annotations

import heapq
import math
import random
from collections import deque
from dataclasses import dataclass

from .errors import ConfigError
from .protocols import red_drop_probability

# event kinds
_START = 0
_ARRIVE = 1
_SERVICE = 2
_ACK = 3
_LOSS = 4
_SAMPLE = 5
_UDP_SEND = 6
_SPAWN = 7

COMPOUND_DEFAULTS = dict(alpha=0.125, k=0.75, beta=0.5, gamma_thresh=30.0, zeta=0.5)
CUBIC_C = 0.4
CUBIC_BETA = 0.7


@dataclass(frozen=True)
class PacketRed:
    """RED constants for the packet queue (thresholds in packets)."""

    b_min: float = 50.0
    b_max: float = 550.0
    p_max: float = 0.1
    w_q: float = 0.002

    def __post_init__(self):
        if not 0 < self.b_min < self.b_max:
            raise ConfigError("need 0 < b_min < b_max")
        if not 0 < self.p_max < 1:
            raise ConfigError("p_max must be in (0, 1)")
        if not 0 < self.w_q <= 1:
            raise ConfigError("w_q must be in (0, 1]")

    @property
    def rho(self):
        return self.p_max / (self.b_max - self.b_min)

    @property
    def eta(self):
        return (1.0 - self.p_max) / self.b_max


@dataclass(frozen=True)
class PacketThreshold:
    q_th: int = 15

    def __post_init__(self):
        if self.q_th < 1:
            raise ConfigError("q_th must be >= 1")


@dataclass(frozen=True)
class DropTail:
    pass


@dataclass(frozen=True)
class FlowSpec:
    protocol: str  # compound | reno | cubic | udp
    access_rate: float  # bits/s
    rtt_propagation: float  # seconds
    start_time: float = 0.0
    bytes_to_send: int | None = None
    route: tuple[int, ...] = (0,)
    start_in_ca: bool = False
    initial_cwnd: float = 1.0

    def __post_init__(self):
        if self.protocol not in ("compound", "reno", "cubic", "udp"):
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.access_rate <= 0 or self.rtt_propagation <= 0:
            raise ConfigError("access rate and propagation delay must be positive")


@dataclass(frozen=True)
class ShortFlowProfile:
    """Poisson arrivals of fixed-size transfers (web-style background load)."""

    rate_per_s: float = 50.0
    bytes_per_flow: int = 5000
    rtt_propagation: float = 0.05
    access_rate: float = 10e6
    route: tuple[int, ...] = (0,)


@dataclass(frozen=True)
class SimConfig:
    topology: str  # dumbbell | parking-lot
    capacity: float  # bits/s per bottleneck link
    buffer: int  # packets
    packet_size: int  # bytes
    flows: tuple[FlowSpec, ...]
    policy: PacketRed | PacketThreshold | DropTail
    duration: float
    seed: int
    sample_interval: float = 0.1
    transient: float | None = None  # start of the measurement window
    short_flows: ShortFlowProfile | None = None
    run_to_completion: bool = False

    def __post_init__(self):
        if self.topology not in ("dumbbell", "parking-lot"):
            raise ConfigError(f"unknown topology {self.topology!r}")
        if self.capacity <= 0 or self.duration <= 0:
            raise ConfigError("capacity and duration must be positive")
        if self.buffer < 1:
            raise ConfigError("buffer must hold at least one packet")
        n_queues = 1 if self.topology == "dumbbell" else 2
        for f in self.flows:
            if any(q >= n_queues for q in f.route):
                raise ConfigError(f"route {f.route} exceeds queue count {n_queues}")

    @property
    def n_queues(self) -> int:
        return 1 if self.topology == "dumbbell" else 2


@dataclass
class QueueCounters:
    arrivals: int = 0
    drops: int = 0
    served: int = 0
    final_occupancy: int = 0
    sojourn_sum: float = 0.0
    sojourn_count: int = 0


@dataclass
class Metrics:
    """Everything measured in one run."""

    config_seed: int
    transient: float
    sample_times: list[float]
    queue_len: list[list[int]]  # per queue
    queue_avg: list[list[float]]
    utilization_pct: list[list[float]]  # per queue, per interval
    windows: dict[int, list[float]]  # per long flow, at sample times
    counters: list[QueueCounters]
    throughput_bps: float
    loss_pct: float
    afct: float | None
    completions: dict[int, float]
    flow_starts: dict[int, float]
    sync_index: float | None
    mean_queueing_delay: float

    def post_transient(self, t0: float):
        """Indices of samples at or after t0."""
        return [i for i, t in enumerate(self.sample_times) if t >= t0]


class _Flow:
    __slots__ = (
        "fid", "spec", "cwnd", "dwnd", "ssthresh", "slow_start", "in_flight",
        "bytes_unsent", "bytes_acked", "base_rtt", "next_seq", "recover_seq",
        "access_free", "completed_at", "wmax_cubic", "k_cubic", "t_loss",
        "started", "is_short",
    )

    def __init__(self, fid, spec: FlowSpec, is_short=False):
        self.fid = fid
        self.spec = spec
        self.cwnd = float(spec.initial_cwnd)
        self.dwnd = 0.0
        self.ssthresh = math.inf
        self.slow_start = not spec.start_in_ca
        self.in_flight = 0
        self.bytes_unsent = spec.bytes_to_send
        self.bytes_acked = 0
        self.base_rtt = math.inf
        self.next_seq = 0
        self.recover_seq = -1
        self.access_free = 0.0
        self.completed_at = None
        self.wmax_cubic = 0.0
        self.k_cubic = 0.0
        self.t_loss = -math.inf
        self.started = False
        self.is_short = is_short

    @property
    def window(self):
        return self.cwnd + self.dwnd


def compound_window_update(flow, event: str, rtt_sample: float | None = None,
                           constants: dict = COMPOUND_DEFAULTS):
    """Per-ack / per-loss window update of the dual-window protocol.

    The per-window branch rule is applied at per-ack granularity, scaled by
    1/window, so that one lossless round trip reproduces the aggregate
    window increase of the fluid law.
    """
    alpha = constants["alpha"]
    k = constants["k"]
    beta = constants["beta"]
    gamma_thresh = constants["gamma_thresh"]
    zeta = constants["zeta"]
    win = flow.cwnd + flow.dwnd
    if event == "ack":
        if rtt_sample is not None:
            flow.base_rtt = min(flow.base_rtt, rtt_sample)
        flow.cwnd += 1.0 / max(win, 1.0)
        rtt = rtt_sample if rtt_sample else flow.base_rtt
        if flow.base_rtt < math.inf and rtt > 0:
            diff = (win / flow.base_rtt - win / rtt) * flow.base_rtt
        else:
            diff = 0.0
        if diff < gamma_thresh:
            flow.dwnd += max(alpha * win**k - 1.0, 0.0) / max(win, 1.0)
        else:
            flow.dwnd = max(flow.dwnd - zeta * diff, 0.0)
    elif event == "loss":
        new_cwnd = flow.cwnd / 2.0
        flow.dwnd = max(win * (1.0 - beta) - new_cwnd, 0.0)
        flow.cwnd = max(new_cwnd, 1.0)
    else:
        raise ConfigError(f"unknown window event {event!r}")
    return flow


def red_enqueue_decision(queue_len: int, avg: float, red: PacketRed,
                         buffer: int, rng: random.Random):
    """(admit?, new_avg): EWMA update then a Bernoulli drop draw."""
    avg = (1.0 - red.w_q) * avg + red.w_q * queue_len
    if queue_len >= buffer:
        return False, avg
    p = red_drop_probability(avg, red)
    if p > 0.0 and rng.random() < p:
        return False, avg
    return True, avg


def threshold_enqueue_decision(queue_len: int, th: PacketThreshold, buffer: int):
    """Deterministic drop once the queue reaches the threshold."""
    return queue_len < min(th.q_th, buffer)


class _Queue:
    __slots__ = ("idx", "policy", "buffer", "pkts", "busy", "avg", "counters",
                 "bits_interval", "bits_total")

    def __init__(self, idx, policy, buffer):
        self.idx = idx
        self.policy = policy
        self.buffer = buffer
        self.pkts = deque()
        self.busy = False
        self.avg = 0.0
        self.counters = QueueCounters()
        self.bits_interval = 0
        self.bits_total = 0


class Simulator:
    def __init__(self, config: SimConfig):
        self.cfg = config
        self.rng = random.Random(config.seed)
        self.now = 0.0
        self._heap = []
        self._tie = 0
        self.queues = [_Queue(i, config.policy, config.buffer)
                       for i in range(config.n_queues)]
        self.flows: dict[int, _Flow] = {}
        self._next_fid = 0
        self.pkt_bits = config.packet_size * 8
        self.tx_time = self.pkt_bits / config.capacity
        self.sample_times: list[float] = []
        self.queue_len_trace = [[] for _ in self.queues]
        self.queue_avg_trace = [[] for _ in self.queues]
        self.util_trace = [[] for _ in self.queues]
        self.window_trace: dict[int, list[float]] = {}
        self._long_fids: list[int] = []
        self._pending_sized = 0

    # -- event plumbing -----------------------------------------------------
    def _push(self, t, kind, a=None, b=None):
        self._tie += 1
        heapq.heappush(self._heap, (t, self._tie, kind, a, b))

    def _add_flow(self, spec: FlowSpec, is_short=False) -> _Flow:
        fid = self._next_fid
        self._next_fid += 1
        fl = _Flow(fid, spec, is_short)
        self.flows[fid] = fl
        if spec.bytes_to_send is not None:
            self._pending_sized += 1
        if not is_short:
            self._long_fids.append(fid)
            self.window_trace[fid] = []
        return fl

    # -- sending ------------------------------------------------------------
    def _try_send(self, fl: _Flow):
        spec = fl.spec
        if spec.protocol == "udp":
            return
        size = self.cfg.packet_size
        while fl.in_flight < fl.window and (fl.bytes_unsent is None or fl.bytes_unsent > 0):
            if fl.bytes_unsent is not None:
                size = min(self.cfg.packet_size, fl.bytes_unsent)
                fl.bytes_unsent -= size
            depart = max(self.now, fl.access_free) + size * 8 / spec.access_rate
            fl.access_free = depart
            arrive_t = depart + spec.rtt_propagation / 2.0
            fl.in_flight += 1
            seq = fl.next_seq
            fl.next_seq += 1
            self._push(arrive_t, _ARRIVE, (fl.fid, seq, size, self.now), spec.route[0])

    def _udp_send(self, fid):
        fl = self.flows[fid]
        spec = fl.spec
        size = self.cfg.packet_size
        arrive_t = self.now + size * 8 / spec.access_rate + spec.rtt_propagation / 2.0
        seq = fl.next_seq
        fl.next_seq += 1
        self._push(arrive_t, _ARRIVE, (fl.fid, seq, size, self.now), spec.route[0])
        self._push(self.now + size * 8 / spec.access_rate, _UDP_SEND, fid)

    # -- queue events --------------------------------------------------------
    def _arrive(self, pkt, qidx):
        q = self.queues[qidx]
        q.counters.arrivals += 1
        policy = q.policy
        if isinstance(policy, PacketRed):
            admit, q.avg = red_enqueue_decision(len(q.pkts), q.avg, policy,
                                                q.buffer, self.rng)
        elif isinstance(policy, PacketThreshold):
            admit = threshold_enqueue_decision(len(q.pkts), policy, q.buffer)
        else:
            admit = len(q.pkts) < q.buffer
        if not admit:
            q.counters.drops += 1
            fl = self.flows[pkt[0]]
            if fl.spec.protocol != "udp":
                self._push(self.now + fl.spec.rtt_propagation, _LOSS,
                           (pkt[0], pkt[1], pkt[2]))
            return
        q.pkts.append((self.now,) + pkt)
        if not q.busy:
            q.busy = True
            self._push(self.now + pkt[2] * 8 / self.cfg.capacity, _SERVICE, qidx)

    def _service(self, qidx):
        q = self.queues[qidx]
        arrived_at, fid, seq, size, send_time = q.pkts.popleft()
        q.counters.served += 1
        q.counters.sojourn_sum += self.now - arrived_at
        q.counters.sojourn_count += 1
        q.bits_interval += size * 8
        fl = self.flows[fid]
        route = fl.spec.route
        pos = route.index(qidx)
        if pos + 1 < len(route):
            self._push(self.now, _ARRIVE, (fid, seq, size, send_time), route[pos + 1])
        else:
            q.bits_total += size * 8
            if fl.spec.protocol != "udp":
                self._push(self.now + fl.spec.rtt_propagation / 2.0, _ACK,
                           (fid, seq, size, send_time))
        if q.pkts:
            self._push(self.now + q.pkts[0][3] * 8 / self.cfg.capacity, _SERVICE, qidx)
        else:
            q.busy = False

    # -- source events --------------------------------------------------------
    def _ack(self, fid, seq, size, send_time):
        fl = self.flows.get(fid)
        if fl is None or fl.completed_at is not None:
            return
        fl.in_flight -= 1
        fl.bytes_acked += size
        rtt_sample = self.now - send_time
        proto = fl.spec.protocol
        if fl.slow_start:
            fl.base_rtt = min(fl.base_rtt, rtt_sample)
            fl.cwnd += 1.0
            if fl.cwnd >= fl.ssthresh:
                fl.slow_start = False
        elif proto == "compound":
            compound_window_update(fl, "ack", rtt_sample)
        elif proto == "reno":
            fl.base_rtt = min(fl.base_rtt, rtt_sample)
            fl.cwnd += 1.0 / fl.cwnd
        elif proto == "cubic":
            fl.base_rtt = min(fl.base_rtt, rtt_sample)
            if fl.wmax_cubic <= 0:
                fl.cwnd += 1.0 / fl.cwnd
            else:
                t = self.now - fl.t_loss
                target = fl.wmax_cubic + CUBIC_C * (t - fl.k_cubic) ** 3
                fl.cwnd += max(target - fl.cwnd, 0.1) / fl.cwnd
        spec_bytes = fl.spec.bytes_to_send
        if spec_bytes is not None and fl.bytes_acked >= spec_bytes:
            fl.completed_at = self.now
            self._pending_sized -= 1
            return
        self._try_send(fl)

    def _loss(self, fid, seq, size):
        fl = self.flows.get(fid)
        if fl is None or fl.completed_at is not None:
            return
        fl.in_flight -= 1
        if fl.bytes_unsent is not None:
            fl.bytes_unsent += size  # the dropped payload must be resent
        if seq > fl.recover_seq:
            fl.recover_seq = fl.next_seq
            win = fl.window
            if fl.slow_start:
                fl.slow_start = False
                fl.ssthresh = max(win / 2.0, 2.0)
            proto = fl.spec.protocol
            if proto == "compound":
                compound_window_update(fl, "loss")
            elif proto == "reno":
                fl.cwnd = max(win / 2.0, 1.0)
            elif proto == "cubic":
                fl.wmax_cubic = win
                fl.cwnd = max(win * CUBIC_BETA, 1.0)
                fl.k_cubic = (fl.wmax_cubic * (1.0 - CUBIC_BETA) / CUBIC_C) ** (1.0 / 3.0)
                fl.t_loss = self.now
        self._try_send(fl)

    # -- sampling ---------------------------------------------------------------
    def _sample(self):
        dt = self.cfg.sample_interval
        self.sample_times.append(self.now)
        for q in self.queues:
            self.queue_len_trace[q.idx].append(len(q.pkts))
            self.queue_avg_trace[q.idx].append(
                q.avg if isinstance(q.policy, PacketRed) else float(len(q.pkts))
            )
            self.util_trace[q.idx].append(
                min(100.0 * q.bits_interval / (self.cfg.capacity * dt), 100.0)
            )
            q.bits_interval = 0
        for fid in self._long_fids:
            fl = self.flows[fid]
            self.window_trace[fid].append(fl.window if fl.started else 0.0)
        if self.now + dt <= self.cfg.duration + 1e-9:
            self._push(self.now + dt, _SAMPLE)

    def _spawn_short(self):
        prof = self.cfg.short_flows
        spec = FlowSpec(
            protocol="reno",
            access_rate=prof.access_rate,
            rtt_propagation=prof.rtt_propagation,
            start_time=self.now,
            bytes_to_send=prof.bytes_per_flow,
            route=prof.route,
        )
        fl = self._add_flow(spec, is_short=True)
        fl.started = True
        self._try_send(fl)
        gap = self.rng.expovariate(prof.rate_per_s)
        if self.now + gap < self.cfg.duration:
            self._push(self.now + gap, _SPAWN)

    # -- main loop -----------------------------------------------------------
    def run(self) -> Metrics:
        cfg = self.cfg
        for spec in cfg.flows:
            fl = self._add_flow(spec)
            self._push(spec.start_time, _START, fl.fid)
        self._push(0.0, _SAMPLE)
        if cfg.short_flows is not None:
            self._push(self.rng.expovariate(cfg.short_flows.rate_per_s), _SPAWN)

        heap = self._heap
        hard_stop = cfg.duration if not cfg.run_to_completion else math.inf
        max_events = int(5e8)
        n = 0
        while heap:
            t, _, kind, a, b = heapq.heappop(heap)
            if t > hard_stop:
                break
            if cfg.run_to_completion and self._pending_sized == 0:
                break
            self.now = t
            if kind == _ARRIVE:
                self._arrive(a, b)
            elif kind == _SERVICE:
                self._service(a)
            elif kind == _ACK:
                self._ack(*a)
            elif kind == _LOSS:
                self._loss(*a)
            elif kind == _SAMPLE:
                self._sample()
            elif kind == _UDP_SEND:
                self._udp_send(a)
            elif kind == _START:
                fl = self.flows[a]
                fl.started = True
                if fl.spec.protocol == "udp":
                    self._udp_send(a)
                else:
                    self._try_send(fl)
            elif kind == _SPAWN:
                self._spawn_short()
            n += 1
            if n > max_events:
                raise ConfigError("event budget exceeded; runaway configuration")
        return self._collect()

    # -- metrics ------------------------------------------------------------
    def _collect(self) -> Metrics:
        cfg = self.cfg
        t0 = cfg.transient if cfg.transient is not None else 0.5 * cfg.duration
        for q in self.queues:
            q.counters.final_occupancy = len(q.pkts)
        arrivals = sum(q.counters.arrivals for q in self.queues)
        drops = sum(q.counters.drops for q in self.queues)
        loss_pct = 100.0 * drops / arrivals if arrivals else 0.0
        horizon = min(self.now, cfg.duration)
        delivered_bits = sum(q.bits_total for q in self.queues)
        throughput = delivered_bits / horizon if horizon > 0 else 0.0

        completions = {
            fid: fl.completed_at
            for fid, fl in self.flows.items()
            if fl.completed_at is not None and fl.spec.bytes_to_send is not None
        }
        starts = {fid: fl.spec.start_time for fid, fl in self.flows.items()}
        sized = [f for f in self.flows.values() if f.spec.bytes_to_send is not None]
        afct = None
        if sized and all(f.completed_at is not None for f in sized):
            afct = sum(f.completed_at - f.spec.start_time for f in sized) / len(sized)

        sync = None
        post = [i for i, t in enumerate(self.sample_times) if t >= t0]
        if self._long_fids and len(post) > 4:
            series = [
                [self.window_trace[fid][i] for i in post] for fid in self._long_fids
            ]
            n = len(post)
            means = [sum(s) / n for s in series]
            stds = [
                math.sqrt(sum((v - m) ** 2 for v in s) / n)
                for s, m in zip(series, means)
            ]
            agg = [sum(s[i] for s in series) / len(series) for i in range(n)]
            agg_mean = sum(agg) / n
            agg_std = math.sqrt(sum((v - agg_mean) ** 2 for v in agg) / n)
            denom = sum(stds) / len(stds)
            sync = agg_std / denom if denom > 0 else 0.0

        soj = sum(q.counters.sojourn_sum for q in self.queues)
        soj_n = sum(q.counters.sojourn_count for q in self.queues)
        return Metrics(
            config_seed=cfg.seed,
            transient=t0,
            sample_times=self.sample_times,
            queue_len=self.queue_len_trace,
            queue_avg=self.queue_avg_trace,
            utilization_pct=self.util_trace,
            windows=self.window_trace,
            counters=[q.counters for q in self.queues],
            throughput_bps=throughput,
            loss_pct=loss_pct,
            afct=afct,
            completions=completions,
            flow_starts=starts,
            sync_index=sync,
            mean_queueing_delay=soj / soj_n if soj_n else 0.0,
        )


def run_simulation(config: SimConfig) -> Metrics:
    """Run one deterministic simulation."""
    return Simulator(config).run()


def config_digest(cfg: SimConfig) -> str:
    """Stable (cross-process) digest of everything but the seed."""
    import hashlib

    text = repr((cfg.topology, cfg.capacity, cfg.buffer, cfg.packet_size,
                 cfg.flows, cfg.policy, cfg.duration, cfg.sample_interval,
                 cfg.short_flows, cfg.run_to_completion))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def run_batch(configs: list[SimConfig]) -> dict[tuple[str, int], Metrics]:
    """Independent runs keyed by (config digest, seed); order-insensitive."""
    return {(config_digest(cfg), cfg.seed): run_simulation(cfg) for cfg in configs}


def compute_afct(metrics: Metrics) -> float:
    """Mean completion time of the sized flows; raises if any are unfinished."""
    sized = [fid for fid in metrics.flow_starts if fid in metrics.completions]
    expected = metrics.afct
    if expected is None:
        stragglers = sorted(
            set(metrics.flow_starts) - set(metrics.completions)
        )
        raise ConfigError(f"flows did not complete: {stragglers[:20]}")
    return expected


# -- desk- and paper-scale scenario builders ---------------------------------

def desk_config(policy, rtt_s: float, seed: int, *, n_flows: int = 20,
                capacity: float = 25e6, duration: float = 120.0,
                bytes_to_send: int | None = None, start_in_ca: bool = False,
                protocol: str = "compound", overload: float = 1.2,
                sample_interval: float = 0.1) -> SimConfig:
    """Scaled-down scenario for CI: a dumbbell with n_flows long-lived
    sources offering overload x capacity in aggregate."""
    rng = random.Random(seed ^ 0x5EED)
    access = overload * capacity / n_flows
    flows = tuple(
        FlowSpec(
            protocol=protocol,
            access_rate=access,
            rtt_propagation=rtt_s,
            start_time=rng.uniform(0.0, min(10.0, duration / 10.0)),
            bytes_to_send=bytes_to_send,
            start_in_ca=start_in_ca,
        )
        for _ in range(n_flows)
    )
    bdp_buffer = max(int(capacity * 0.25 / (8 * 1500)), 64)
    return SimConfig(
        topology="dumbbell",
        capacity=capacity,
        buffer=bdp_buffer,
        packet_size=1500,
        flows=flows,
        policy=policy,
        duration=duration,
        seed=seed,
        sample_interval=sample_interval,
        run_to_completion=bytes_to_send is not None,
    )


def paper_config(policy, rtt_s: float, seed: int) -> SimConfig:
    """Full-scale scenario: 60 flows, 100 Mbps bottleneck, 500 s."""
    return desk_config(
        policy, rtt_s, seed, n_flows=60, capacity=100e6, duration=500.0
    )


# -- scenario files -----------------------------------------------------------

_SCALAR_KEYS = {
    "topology", "capacity_mbps", "buffer_pkts", "packet_bytes", "duration_s",
    "sample_interval_s", "seed", "policy", "red.bmin", "red.bmax", "red.pmax",
    "red.wq", "threshold.qth",
}
_FLOW_KEYS = {"protocol", "access_mbps", "rtt_ms", "start_s", "bytes"}


def parse_scenario(text: str) -> SimConfig:
    """Parse the flat key = value scenario format."""
    pairs = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        pairs[key] = val

    flows_kv: dict[int, dict[str, str]] = {}
    scalars: dict[str, str] = {}
    for key, val in pairs.items():
        if key.startswith("flow."):
            parts = key.split(".")
            if len(parts) != 3 or parts[2] not in _FLOW_KEYS:
                raise ConfigError(f"unknown key {key!r}")
            try:
                idx = int(parts[1])
            except ValueError:
                raise ConfigError(f"bad flow index in {key!r}") from None
            flows_kv.setdefault(idx, {})[parts[2]] = val
        elif key in _SCALAR_KEYS:
            scalars[key] = val
        else:
            raise ConfigError(f"unknown key {key!r}")

    def need(key):
        if key not in scalars:
            raise ConfigError(f"missing key {key!r}")
        return scalars[key]

    policy_name = need("policy").lower()
    if policy_name == "red":
        policy = PacketRed(
            b_min=float(need("red.bmin")),
            b_max=float(need("red.bmax")),
            p_max=float(need("red.pmax")),
            w_q=float(scalars.get("red.wq", "0.002")),
        )
    elif policy_name == "threshold":
        policy = PacketThreshold(q_th=int(need("threshold.qth")))
    elif policy_name == "droptail":
        policy = DropTail()
    else:
        raise ConfigError(f"unknown policy {policy_name!r}")

    flows = []
    for idx in sorted(flows_kv):
        kv = flows_kv[idx]
        for req in ("protocol", "access_mbps", "rtt_ms"):
            if req not in kv:
                raise ConfigError(f"flow.{idx} is missing {req}")
        flows.append(
            FlowSpec(
                protocol=kv["protocol"],
                access_rate=float(kv["access_mbps"]) * 1e6,
                rtt_propagation=float(kv["rtt_ms"]) / 1e3,
                start_time=float(kv.get("start_s", "0")),
                bytes_to_send=int(kv["bytes"]) if "bytes" in kv else None,
            )
        )
    return SimConfig(
        topology=need("topology"),
        capacity=float(need("capacity_mbps")) * 1e6,
        buffer=int(need("buffer_pkts")),
        packet_size=int(need("packet_bytes")),
        flows=tuple(flows),
        policy=policy,
        duration=float(need("duration_s")),
        seed=int(need("seed")),
        sample_interval=float(scalars.get("sample_interval_s", "0.1")),
    )


def format_scenario(cfg: SimConfig) -> str:
    lines = [
        f"topology = {cfg.topology}",
        f"capacity_mbps = {cfg.capacity / 1e6:g}",
        f"buffer_pkts = {cfg.buffer}",
        f"packet_bytes = {cfg.packet_size}",
        f"duration_s = {cfg.duration:g}",
        f"sample_interval_s = {cfg.sample_interval:g}",
        f"seed = {cfg.seed}",
    ]
    if isinstance(cfg.policy, PacketRed):
        lines += [
            "policy = red",
            f"red.bmin = {cfg.policy.b_min:g}",
            f"red.bmax = {cfg.policy.b_max:g}",
            f"red.pmax = {cfg.policy.p_max:g}",
            f"red.wq = {cfg.policy.w_q:g}",
        ]
    elif isinstance(cfg.policy, PacketThreshold):
        lines += ["policy = threshold", f"threshold.qth = {cfg.policy.q_th}"]
    else:
        lines += ["policy = droptail"]
    for i, f in enumerate(cfg.flows):
        lines.append(f"flow.{i}.protocol = {f.protocol}")
        lines.append(f"flow.{i}.access_mbps = {f.access_rate / 1e6:g}")
        lines.append(f"flow.{i}.rtt_ms = {f.rtt_propagation * 1e3:g}")
        lines.append(f"flow.{i}.start_s = {f.start_time:g}")
        if f.bytes_to_send is not None:
            lines.append(f"flow.{i}.bytes = {f.bytes_to_send}")
    return "\n".join(lines) + "\n"


def write_metrics_csv(metrics: Metrics, outdir) -> None:
    """queue.csv, flows.csv, util.csv, summary.csv in outdir."""
    import os

    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "queue.csv"), "w") as fh:
        fh.write("t,q,avg_q\n")
        for i, t in enumerate(metrics.sample_times):
            fh.write(
                f"{t:.12g},{metrics.queue_len[0][i]},{metrics.queue_avg[0][i]:.12g}\n"
            )
    with open(os.path.join(outdir, "flows.csv"), "w") as fh:
        fh.write("t,flow_id,window\n")
        for fid, wins in metrics.windows.items():
            for t, w in zip(metrics.sample_times, wins):
                fh.write(f"{t:.12g},{fid},{w:.12g}\n")
    with open(os.path.join(outdir, "util.csv"), "w") as fh:
        fh.write("t,utilization_pct\n")
        for t, u in zip(metrics.sample_times, metrics.utilization_pct[0]):
            fh.write(f"{t:.12g},{u:.12g}\n")
    post = metrics.post_transient(metrics.transient)
    min_util = min(
        (metrics.utilization_pct[0][i] for i in post[1:]), default=0.0
    )
    with open(os.path.join(outdir, "summary.csv"), "w") as fh:
        fh.write("loss_pct,throughput_mbps,afct_s,min_util_pct\n")
        afct = f"{metrics.afct:.12g}" if metrics.afct is not None else ""
        fh.write(
            f"{metrics.loss_pct:.12g},{metrics.throughput_bps / 1e6:.12g},"
            f"{afct},{min_util:.12g}\n"
        )
