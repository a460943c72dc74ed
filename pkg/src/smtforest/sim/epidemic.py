"""Discrete-time epidemic simulation of forest freshness and proof repair.

One real :class:`~smtforest.authority.Authority` holds every certificate.
Nodes are kept in flat arrays: which published forest version they hold,
whether their own proof is current, and, for outdated nodes, the actual stale
proof object. Repairs run the real repair algorithms on those objects, and
every byte counted comes from an encoding produced by the wire/node code.

Encounters in which neither node has anything to fix only cost the two
contact messages, so they are tallied in bulk; the rest are replayed one by
one in encounter order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import wire
from ..authority import Authority
from ..forest import DEFAULT_CONFIG, ValidationForest
from ..hash_tree import calc_poi
from ..node import answer_parity_request, plan_sync
from ..repair import LevelCache, construct_lvl_cache, update_poi_with_lvl_cache, update_poi_with_poi

log = logging.getLogger(__name__)

HOUR = 3600
DAY = 24 * HOUR
START_EPOCH = 2900  # mid-2025 in week epochs; any value works


@dataclass(frozen=True)
class SimParams:
    node_count: int = 10_000
    weeks: int = 4
    missing_share: float = 0.10
    cacher_share: float = 0.10
    clvl: int = 7
    encounters_per_node_per_hour: int = 5
    daily_revocation_rate: float = 0.00028
    weekly_issue_rate: float = 0.001
    give_up_threshold: int = 30
    rng_seed: int = 1

    def __post_init__(self):
        if self.node_count < 100:
            raise ValueError("node_count must be at least 100")
        if self.weeks < 1:
            raise ValueError("weeks must be positive")
        for name in ("missing_share", "cacher_share", "daily_revocation_rate", "weekly_issue_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 1 <= self.clvl <= 16:
            raise ValueError("clvl must lie in [1, 16]")
        if self.encounters_per_node_per_hour < 0 or self.give_up_threshold < 1:
            raise ValueError("encounters must be >= 0 and give-up threshold >= 1")


@dataclass
class SimMetrics:
    failed_repair_share: float = 0.0
    avg_meets_until_repair: float = 0.0
    both_outdated_encounter_share: float = 0.0
    node_weekly_exchange_bytes: float = 0.0
    ca_daily_update_bytes: float = 0.0
    epoch_change_bytes: float = 0.0
    outdated_episodes: int = 0
    distributed_repairs: int = 0
    lc_repairs: int = 0
    direct_repairs: int = 0
    repaired_by_update: int = 0
    ca_fallbacks: int = 0
    encounters: int = 0
    daily: list = field(default_factory=list)

    def summary(self) -> dict:
        out = asdict(self)
        out.pop("daily")
        return out


CSV_FIELDS = list(SimMetrics().summary())


class _Population:
    """Growable per-node arrays."""

    def __init__(self):
        self.cert: list[bytes] = []
        self.poi: list = []  # None while the node's proof is current
        self.epoch = np.zeros(0, dtype=np.int64)
        self.fv = np.zeros(0, dtype=np.int64)
        self.lc_ver = np.zeros(0, dtype=np.int64)
        self.meets = np.zeros(0, dtype=np.int64)
        self.cacher = np.zeros(0, dtype=bool)
        self.revoked = np.zeros(0, dtype=bool)
        self.outdated = np.zeros(0, dtype=bool)

    def __len__(self):
        return len(self.cert)

    def extend(self, certs, epochs, version, cachers):
        k = len(certs)
        self.cert.extend(certs)
        self.poi.extend([None] * k)
        self.epoch = np.concatenate([self.epoch, np.asarray(epochs, dtype=np.int64)])
        self.fv = np.concatenate([self.fv, np.full(k, version, dtype=np.int64)])
        self.lc_ver = np.concatenate([self.lc_ver, np.full(k, version, dtype=np.int64)])
        self.meets = np.concatenate([self.meets, np.zeros(k, dtype=np.int64)])
        self.cacher = np.concatenate([self.cacher, np.asarray(cachers, dtype=bool)])
        self.revoked = np.concatenate([self.revoked, np.zeros(k, dtype=bool)])
        self.outdated = np.concatenate([self.outdated, np.zeros(k, dtype=bool)])


class EpidemicSimulation:
    def __init__(self, params: SimParams):
        self.p = params
        self.cfg = DEFAULT_CONFIG
        self.rng = np.random.default_rng(params.rng_seed)
        self.t0 = START_EPOCH * self.cfg.epoch_duration
        self.ca = Authority(self.cfg, now=self.t0, key_seed=b"sim")
        self.pop = _Population()
        self.versions: list[ValidationForest] = []
        self.changed: list[frozenset] = []  # epochs whose root changed in each version
        self.m = SimMetrics()
        self._sync_bytes: dict[tuple[int, int], int] = {}
        self._lc_bytes: dict[int, int] = {}
        self._lcs: dict[tuple[int, bytes], LevelCache] = {}
        self._revoked_yesterday: list[int] = []
        self._encounter_bytes = 0
        self._both_outdated = 0
        self._meets_sum = 0
        self._update_sizes: list[int] = []
        self._epoch_change_sizes: list[int] = []
        self._node_weeks = 0.0

    # -- helpers -----------------------------------------------------------

    def _new_cert(self) -> bytes:
        return self.rng.bytes(32)

    def _expiry(self, epoch: int) -> int:
        return epoch * self.cfg.epoch_duration + int(self.rng.integers(0, self.cfg.epoch_duration))

    @property
    def latest(self) -> int:
        return len(self.versions) - 1

    def _publish(self) -> None:
        vf = self.ca.forest
        if self.versions:
            prev = self.versions[-1]
            changed = frozenset(
                e for e in range(vf.base_epoch, vf.newest_epoch + 1)
                if not prev.in_window(e) or prev.root_of(e) != vf.root_of(e)
            )
        else:
            changed = frozenset()
        self.versions.append(vf)
        self.changed.append(changed)

    def _changed_between(self, old: int, new: int) -> set:
        out = set()
        for v in range(old + 1, new + 1):
            out |= self.changed[v]
        base = self.versions[new].base_epoch
        return {e for e in out if e >= base}

    def sync_bytes(self, old: int, new: int) -> int:
        """Bytes of the parity request and root response taking ``old`` to ``new``."""
        key = (old, new)
        size = self._sync_bytes.get(key)
        if size is None:
            _, req = plan_sync(self.versions[old], self.versions[new].primer)
            resp = answer_parity_request(self.versions[new], req)
            size = len(req.to_bytes()) + len(resp.to_bytes())
            self._sync_bytes[key] = size
        return size

    def _level_cache(self, epoch: int) -> LevelCache:
        lut = self.ca.luts[epoch]
        key = (epoch, lut.root)
        lc = self._lcs.get(key)
        if lc is None:
            lc = construct_lvl_cache(self.p.clvl, lut, epoch)
            self._lcs[key] = lc
        return lc

    def lc_transfer_bytes(self, count: int) -> int:
        size = self._lc_bytes.get(count)
        if size is None:
            epochs = list(range(self.ca.base_epoch, self.ca.base_epoch + count))
            req = wire.LcRequest(tuple(range(count))).to_bytes()
            resp = wire.encode_lc_response([self._level_cache(e) for e in epochs])
            size = len(req) + len(resp)
            self._lc_bytes[count] = size
        return size

    def _lc_fresh(self, i: int) -> bool:
        return not self._changed_between(int(self.pop.lc_ver[i]), int(self.pop.fv[i]))

    def _current_poi(self, i: int):
        return calc_poi(self.pop.cert[i], self.ca.luts[int(self.pop.epoch[i])])

    def _mark_current(self, i: int) -> None:
        pop = self.pop
        pop.poi[i] = None
        pop.outdated[i] = False
        pop.meets[i] = 0

    # -- setup -------------------------------------------------------------

    def setup(self) -> None:
        p, cfg = self.p, self.cfg
        base = self.ca.base_epoch
        epochs = self.rng.integers(base, base + cfg.epoch_count, size=p.node_count)
        certs = [self._new_cert() for _ in range(p.node_count)]
        self.ca.bulk_load(zip(certs, (self._expiry(int(e)) for e in epochs)), now=self.t0 + 1)
        self._publish()
        cachers = self.rng.random(p.node_count) < p.cacher_share
        self.pop.extend(certs, epochs, 0, cachers)

    # -- daily CA cycle ----------------------------------------------------------

    def _epoch_change(self, now: int) -> list[int]:
        """Renew expiring nodes, enrol newcomers, slide the window."""
        pop, ca = self.pop, self.ca
        expiring = np.flatnonzero(pop.epoch == ca.base_epoch)
        new_newest = ca.newest_epoch + 1
        renewed = []
        for i in expiring:
            cert = self._new_cert()
            ca.stage_certificate(cert, self._expiry(new_newest))
            pop.cert[i] = cert
            pop.epoch[i] = new_newest
            pop.revoked[i] = False
            renewed.append(int(i))
        newcomers = int(self.rng.binomial(len(pop), self.p.weekly_issue_rate))
        certs = [self._new_cert() for _ in range(newcomers)]
        for cert in certs:
            ca.stage_certificate(cert, self._expiry(new_newest))
        start = len(pop)
        pop.extend(certs, [new_newest] * newcomers, self.latest, self.rng.random(newcomers) < self.p.cacher_share)
        update = ca.epoch_change(now)
        self._epoch_change_sizes.append(wire.epoch_change_size(update))
        self._publish()
        return renewed + list(range(start, start + newcomers))

    def _daily_update(self, day: int) -> None:
        p, pop, ca = self.p, self.pop, self.ca
        day_start = self.t0 + day * DAY
        fresh_nodes: list[int] = []
        old_version = self.latest
        if day > 0 and day % 7 == 0:
            fresh_nodes += self._epoch_change(day_start)

        # choose the day's mutations before touching any tree
        reissue = [i for i in self._revoked_yesterday if pop.revoked[i]]
        active = np.flatnonzero(~pop.revoked)
        k = int(self.rng.binomial(len(active), p.daily_revocation_rate))
        victims = [int(i) for i in self.rng.choice(active, size=k, replace=False)] if k else []
        affected = {int(pop.epoch[i]) for i in victims}
        if reissue:
            affected.add(ca.newest_epoch)

        delivered = self.rng.random(len(pop)) >= p.missing_share
        receivers = delivered & (pop.fv == old_version)
        exempt = np.zeros(len(pop), dtype=bool)
        exempt[fresh_nodes + reissue + victims] = True
        # nodes that miss a change to their tree keep the proof they hold now
        for e in affected:
            for i in np.flatnonzero((pop.epoch == e) & ~receivers & ~pop.outdated & ~pop.revoked & ~exempt):
                pop.poi[i] = self._current_poi(int(i))
                pop.outdated[i] = True
                pop.meets[i] = 0
                self.m.outdated_episodes += 1

        for i in reissue:
            cert = self._new_cert()
            ca.issue(cert, self._expiry(ca.newest_epoch))
            pop.cert[i] = cert
            pop.epoch[i] = ca.newest_epoch
            pop.revoked[i] = False
            fresh_nodes.append(i)
        for i in victims:
            ca.revoke(pop.cert[i])
            pop.revoked[i] = True
            pop.outdated[i] = False
            pop.poi[i] = None
        self._revoked_yesterday = victims
        update = ca.build_update(day_start + 60)
        self._update_sizes.append(wire.ca_update_size(update))
        self._publish()
        new_version = self.latest

        # blind updates for outdated receivers
        absent = {poi.leaf_hash: poi.leaf_hash not in ca.luts[e] for e, poi in update.update_pois}
        by_epoch: dict[int, list] = {}
        for e, poi in update.update_pois:
            by_epoch.setdefault(e, []).append(poi)
        for i in np.flatnonzero(receivers & pop.outdated):
            cert = pop.cert[i]
            work = pop.poi[i]
            for poi in by_epoch.get(int(pop.epoch[i]), ()):
                if poi.leaf_hash != cert:
                    work = update_poi_with_poi(cert, work, poi.leaf_hash, poi, new_absent=absent[poi.leaf_hash])
            if work == self._current_poi(int(i)):
                self._mark_current(int(i))
                self.m.repaired_by_update += 1
            else:
                pop.poi[i] = work
        lc_in_step = receivers & pop.cacher & (pop.lc_ver == old_version)
        pop.fv[receivers] = new_version
        pop.lc_ver[lc_in_step] = new_version
        for i in fresh_nodes:
            self._mark_current(i)
            pop.fv[i] = new_version
            pop.lc_ver[i] = new_version

    # -- encounters ----------------------------------------------------------------

    def _dirty(self) -> np.ndarray:
        pop = self.pop
        latest = self.latest
        stale_lc = np.zeros(len(pop), dtype=bool)
        if pop.cacher.any():
            ok = np.array([not self._changed_between(v, latest) for v in range(latest + 1)])
            stale_lc = pop.cacher & ~ok[pop.lc_ver]
        return (pop.fv != latest) | pop.outdated | stale_lc

    def _hour(self) -> None:
        pop, p = self.pop, self.p
        n = len(pop)
        if p.encounters_per_node_per_hour == 0:
            return
        initiators = self.rng.permutation(np.repeat(np.arange(n), p.encounters_per_node_per_hour))
        partners = self.rng.integers(0, n - 1, size=len(initiators))
        partners += partners >= initiators
        dirty = self._dirty()
        busy = dirty[initiators] | dirty[partners]
        contact = 2 * wire.CONTACT_SIZE
        self.m.encounters += len(initiators)
        self._encounter_bytes += contact * len(initiators)
        for a, b in zip(initiators[busy].tolist(), partners[busy].tolist()):
            self._encounter(a, b)

    def _encounter(self, a: int, b: int) -> None:
        pop = self.pop
        fv = pop.fv
        if pop.outdated[a] and pop.outdated[b]:
            self._both_outdated += 1
        va, vb = int(fv[a]), int(fv[b])
        if va != vb:
            stale, fresh = (a, b) if va < vb else (b, a)
            self._encounter_bytes += self.sync_bytes(int(fv[stale]), int(fv[fresh]))
            fv[stale] = fv[fresh]
        latest = self.latest
        if fv[a] != latest or fv[b] != latest:
            return
        if pop.cacher[a] and pop.cacher[b]:
            fa, fb = self._lc_fresh(a), self._lc_fresh(b)
            if fa != fb:
                stale = b if fa else a
                count = len(self._changed_between(int(pop.lc_ver[stale]), latest))
                self._encounter_bytes += self.lc_transfer_bytes(count)
                pop.lc_ver[stale] = latest
        for x, y in ((a, b), (b, a)):
            if pop.outdated[x]:
                self._repair(x, y)

    def _repair(self, x: int, y: int) -> None:
        pop, m = self.pop, self.m
        pop.meets[x] += 1
        cert = pop.cert[x]
        epoch = int(pop.epoch[x])
        fresh = self._current_poi(x)
        work = pop.poi[x]
        fixed_by = None
        if pop.cacher[y] and self._lc_fresh(y):
            repaired = update_poi_with_lvl_cache(cert, work, self._level_cache(epoch))
            self._encounter_bytes += work.encoded_size + repaired.encoded_size
            if repaired == fresh:
                fixed_by = "lc"
        if fixed_by is None and int(pop.epoch[y]) == epoch:
            if pop.revoked[y] or pop.outdated[y]:
                return self._failed_meeting(x)  # peer declines with an empty response
            peer_poi = self._current_poi(y)
            self._encounter_bytes += peer_poi.encoded_size
            work = update_poi_with_poi(cert, work, peer_poi.leaf_hash, peer_poi)
            pop.poi[x] = work
            if work == fresh:
                fixed_by = "direct"
        if fixed_by is None:
            return self._failed_meeting(x)
        m.distributed_repairs += 1
        if fixed_by == "lc":
            m.lc_repairs += 1
        else:
            m.direct_repairs += 1
        self._meets_sum += int(pop.meets[x])
        self._mark_current(x)

    def _failed_meeting(self, x: int) -> None:
        pop = self.pop
        if pop.meets[x] >= self.p.give_up_threshold:
            poi = self._current_poi(x)
            self._encounter_bytes += len(wire.encode_ca_poi_request(pop.cert[x]))
            self._encounter_bytes += len(wire.encode_ca_poi_response(poi, self.ca.forest.primer, self.ca.forest.primer_sig))
            self.m.ca_fallbacks += 1
            self._mark_current(x)

    # -- driver ------------------------------------------------------------------

    def run(self) -> SimMetrics:
        self.setup()
        p, m = self.p, self.m
        for day in range(7 * p.weeks):
            self._daily_update(day)
            before = len(self.pop)
            stale_start = float(np.mean(self.pop.fv != self.latest))
            for _ in range(24):
                self._hour()
            self._node_weeks += len(self.pop) / 7
            m.daily.append(
                {
                    "day": day,
                    "nodes": before,
                    "stale_forest_share_after_update": stale_start,
                    "stale_forest_share_end": float(np.mean(self.pop.fv != self.latest)),
                    "outdated_nodes_end": int(self.pop.outdated.sum()),
                    "ca_update_bytes": self._update_sizes[-1],
                    "distributed_repairs": m.distributed_repairs,
                    "ca_fallbacks": m.ca_fallbacks,
                }
            )
        resolved = m.distributed_repairs + m.ca_fallbacks + m.repaired_by_update
        m.failed_repair_share = m.ca_fallbacks / resolved if resolved else 0.0
        m.avg_meets_until_repair = self._meets_sum / m.distributed_repairs if m.distributed_repairs else 0.0
        m.both_outdated_encounter_share = self._both_outdated / m.encounters if m.encounters else 0.0
        m.node_weekly_exchange_bytes = self._encounter_bytes / self._node_weeks if self._node_weeks else 0.0
        m.ca_daily_update_bytes = float(np.mean(self._update_sizes)) if self._update_sizes else 0.0
        m.epoch_change_bytes = float(np.mean(self._epoch_change_sizes)) if self._epoch_change_sizes else 0.0
        return m


def run_epidemic_sim(params: SimParams) -> SimMetrics:
    return EpidemicSimulation(params).run()


def metrics_csv(rows: list[tuple[SimParams, SimMetrics]]) -> str:
    buf = io.StringIO()
    fields = list(asdict(SimParams())) + CSV_FIELDS
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for params, metrics in rows:
        w.writerow({**asdict(params), **{k: _fmt(v) for k, v in metrics.summary().items()}})
    return buf.getvalue()


def metrics_json(params: SimParams, metrics: SimMetrics) -> str:
    return json.dumps({"params": asdict(params), "metrics": metrics.summary(), "daily": metrics.daily}, indent=2)


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else v
