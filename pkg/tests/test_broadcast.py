import hashlib

import numpy as np
import pytest

from swarm.broadcast import (
    DownloadClient,
    OriginPublisher,
    RelayCore,
    RelayStats,
    StatsBook,
    TokenBucket,
    build_manifest,
    select_relay,
    selection_probs,
    verify_manifest,
)
from swarm.broadcast.client import IntegrityError, StalenessError
from swarm.broadcast.manifest import CheckpointManifest
from swarm.broadcast.relay import DirectTransport
from swarm.keys import SigningKey
from swarm.prng import SplitMix64

KEY = SigningKey.from_seed(400, 0)
CLIENT = "aa" * 32


class ManualClock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        return self.t

    def advance(self, dt):
        self.t += dt


def make_relays(n=2, **kw):
    cores = {f"relay{i}": RelayCore(f"relay{i}", **kw) for i in range(n)}
    for c in cores.values():
        c.set_allowlist([CLIENT])
    return cores


def make_stack(n=2, data=b"x" * 5000, shard_size=1024, version=1, **relay_kw):
    cores = make_relays(n, **relay_kw)
    origin = OriginPublisher(DirectTransport(cores), sorted(cores), shard_size, KEY)
    origin.publish(data, version)
    client = DownloadClient(sorted(cores), DirectTransport(cores, CLIENT),
                            KEY.address, rng_seed=5)
    return cores, origin, client


class TestManifest:
    def test_shard_count(self):
        manifest, shards = build_manifest(3, b"a" * (10 * 2**20), 2**20, KEY)
        assert manifest.num_shards == 10 == len(shards)
        assert verify_manifest(manifest, KEY.address)

    def test_empty_checkpoint_digest_is_sha256_of_empty(self):
        manifest, shards = build_manifest(1, b"", 1024, KEY)
        assert shards == []
        assert manifest.assembled_digest == (
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")

    def test_tampered_manifest_fails_verification(self):
        manifest, _ = build_manifest(2, b"abc", 2, KEY)
        bad = CheckpointManifest(**{**manifest.__dict__, "total_bytes": 4})
        assert not verify_manifest(bad, KEY.address)


class TestRelayCore:
    def test_retention_keeps_last_five(self):
        cores = make_relays(1)
        core = cores["relay0"]
        for v in range(1, 7):
            origin = OriginPublisher(DirectTransport(cores), ["relay0"], 16, KEY)
            origin.last_version = v - 1
            origin.publish(b"data%d" % v, v)
        assert core.stored_versions() == [2, 3, 4, 5, 6]
        assert core.get_manifest(1, CLIENT).status == 404
        assert core.get_manifest(2, CLIENT).status == 200

    def test_duplicate_version_rejected(self):
        cores = make_relays(1)
        t = DirectTransport(cores)
        origin = OriginPublisher(t, ["relay0"], 16, KEY)
        origin.publish(b"aa", 1)
        with pytest.raises(ValueError):
            origin.publish(b"bb", 1)
        assert cores["relay0"].put_manifest(1, b"zz").status == 409

    def test_allowlist_deny(self):
        cores = make_relays(1)
        core = cores["relay0"]
        assert core.get_probe("bb" * 32).status == 403
        core.set_allowlist([CLIENT, "bb" * 32])
        assert core.get_probe("bb" * 32).status == 200
        core.set_allowlist([CLIENT])       # slashed node drops off
        assert core.get_probe("bb" * 32).status == 403

    def test_token_bucket_throttles_burst(self):
        clock = ManualClock()
        bucket = TokenBucket(rate=1.0, burst=3, clock=clock)
        assert [bucket.try_acquire() for _ in range(4)] == [True, True, True, False]
        clock.advance(1.0)
        assert bucket.try_acquire()

    def test_relay_throttles_after_burst(self):
        clock = ManualClock()
        cores = make_relays(1, rate=1.0, burst=2, clock=clock)
        core = cores["relay0"]
        statuses = [core.get_probe(CLIENT).status for _ in range(3)]
        assert statuses == [200, 200, 429]


class TestSelection:
    def test_hand_normalization(self):
        stats = {"a": RelayStats(bandwidth_ema=100, success_rate_ema=1.0),
                 "b": RelayStats(bandwidth_ema=100, success_rate_ema=0.5)}
        probs = selection_probs(stats, p_min=0.0)
        assert abs(probs["a"] - 2 / 3) < 1e-12
        assert abs(probs["b"] - 1 / 3) < 1e-12

    def test_equal_stats_uniform(self):
        stats = {f"r{i}": RelayStats(50.0, 0.8) for i in range(4)}
        probs = selection_probs(stats, p_min=0.05)
        assert all(abs(p - 0.25) < 1e-12 for p in probs.values())

    def test_zero_weight_relay_keeps_floor_probability(self):
        stats = {"good": RelayStats(100.0, 1.0), "dead": RelayStats(0.0, 0.0)}
        probs = selection_probs(stats, p_min=0.05)
        assert probs["dead"] >= 0.05 - 1e-12
        assert abs(sum(probs.values()) - 1.0) < 1e-12

    def test_all_zero_weights_uniform(self):
        stats = {"a": RelayStats(0.0, 0.0), "b": RelayStats(0.0, 0.0)}
        probs = selection_probs(stats, p_min=0.05)
        assert probs == {"a": 0.5, "b": 0.5}

    def test_empirical_frequencies_match_weight_law(self):
        stats = {"a": RelayStats(120.0, 1.0), "b": RelayStats(80.0, 0.5),
                 "c": RelayStats(10.0, 0.1)}
        probs = selection_probs(stats, p_min=0.05)
        rng = SplitMix64(9)
        n = 10_000
        counts = {r: 0 for r in stats}
        for _ in range(n):
            counts[select_relay(stats, rng, p_min=0.05)] += 1
        tv = 0.5 * sum(abs(counts[r] / n - probs[r]) for r in stats)
        assert tv < 0.02


class TestStatsBook:
    def test_ema_hand_value(self):
        book = StatsBook(beta=0.3)
        book.update("r", 100.0, True, now=1.0)
        book.update("r", 200.0, True, now=2.0)
        assert abs(book.relays["r"].bandwidth_ema - 130.0) < 1e-12

    def test_repeated_failures_drive_success_to_zero(self):
        book = StatsBook(beta=0.3)
        book.update("r", 50.0, True, now=0.0)
        last = 1.0
        for i in range(40):
            book.update("r", 0.0, False, now=float(i))
            assert book.relays["r"].success_rate_ema <= last + 1e-15
            last = book.relays["r"].success_rate_ema
        assert book.relays["r"].success_rate_ema < 1e-4

    def test_healing_pulls_cold_relay_toward_fleet_mean(self):
        book = StatsBook(beta=0.3, heal_after=5.0, heal_pull=0.1)
        book.update("hot", 100.0, True, now=100.0)
        book.update("cold", 10.0, True, now=0.0)
        cold = book.relays["cold"]
        before = cold.bandwidth_ema
        for _ in range(10):
            book.healing_tick(now=101.0)
        assert cold.bandwidth_ema > before
        # fixed point is the fleet mean
        for _ in range(500):
            book.healing_tick(now=101.0)
        mean = (book.relays["hot"].bandwidth_ema + cold.bandwidth_ema) / 2
        assert abs(cold.bandwidth_ema - mean) < 1.0


class TestDownload:
    def test_honest_roundtrip_bytes_identical(self):
        data = b"checkpoint-bytes" * 500
        _, _, client = make_stack(data=data, shard_size=512)
        assert client.download_version(1) == data

    def test_corrupted_shard_refetched_elsewhere(self):
        data = bytes(range(256)) * 40
        cores, _, client = make_stack(n=2, data=data, shard_size=1024)
        cores["relay0"].set_fault(1, 2)
        assert client.download_version(1) == data
        # the faulty relay took a success-rate hit
        assert (client.stats.relays["relay0"].success_rate_ema
                <= client.stats.relays["relay1"].success_rate_ema + 1e-12)

    def test_forged_manifest_raises_integrity_error(self):
        data = b"y" * 4000
        cores, origin, client = make_stack(data=data, shard_size=1024)
        fields = dict(version=2, num_shards=4, shard_size=1024,
                      total_bytes=4000,
                      shard_digests=tuple(
                          hashlib.sha256(data[i:i + 1024]).hexdigest()
                          for i in range(0, 4000, 1024)),
                      assembled_digest="00" * 32)
        from swarm.wire import canonical_json
        sig = KEY.sign(canonical_json({**fields,
                                       "shard_digests": list(fields["shard_digests"])})).hex()
        bad = CheckpointManifest(**fields, signature=sig)
        for core in cores.values():
            core.put_manifest(2, bad.to_bytes())
            for i in range(4):
                core.put_shard(2, i, data[i * 1024:(i + 1) * 1024])
        with pytest.raises(IntegrityError):
            client.download_version(2)

    def test_all_relays_denying_raises_staleness(self):
        cores, _, client = make_stack()
        for core in cores.values():
            core.set_allowlist([])
        with pytest.raises(StalenessError):
            client.download_version(1)

    def test_probe_seeds_stats_for_all_relays(self):
        _, _, client = make_stack(n=3)
        client.probe_all()
        assert all(s.bandwidth_ema > 0 for s in client.stats.relays.values())

    def test_striping_beats_single_relay(self):
        # two equal 2 MB/s links; striping uses both at once
        data = bytes(1000) * 400   # 400 KB, 8 shards
        rate = {"relay0": 2e6, "relay1": 2e6}
        cores = make_relays(2)
        OriginPublisher(DirectTransport(cores), sorted(cores), 50_000, KEY) \
            .publish(data, 1)
        import time as _t

        def timed(relay_ids):
            client = DownloadClient(
                relay_ids, DirectTransport(cores, CLIENT, rate=rate),
                KEY.address, rng_seed=3, max_workers=4)
            client.probe_all()
            t0 = _t.monotonic()
            assert client.download_version(1) == data
            return _t.monotonic() - t0

        # single-relay download: all shards through one 2 MB/s link
        single = timed(["relay0"])
        striped = timed(["relay0", "relay1"])
        assert striped < single
