import math

import numpy as np
import pytest

from scsim import codec
from scsim.codec import SvApdu
from scsim.devices import (
    BURST_INTERVALS_MS, Breaker, BreakerState, DifferentialElement, FaultSegment, GooseConfig,
    GoosePublisher, MergingUnit, OvercurrentElement, ProtectionIed, ProtectionSettings, SvStream,
    Waveform, cb_on_goose, diff_quantities, rms_estimate, sample_time_ns, sample_values,
)
from scsim.fabric import MS, SECOND, Fabric, Host, PortId, Simulator

RATE = codec.SAMPLES_PER_SECOND


def sv_at(k, amps, sv_id="S", sign=1):
    t = k / RATE
    return SvApdu(sv_id, k % RATE, 1, 2, sample_values(t, amps, 7967.0, 60.0, sign), (0,) * 8)


class TestSampling:
    def test_phase_values(self):
        vals = sample_values(0.0, 1000.0, 7967.0, 60.0)
        ipk = math.sqrt(2) * 1000.0 * 1000.0
        assert vals[0] == 0
        assert vals[1] == round(ipk * math.sin(-2 * math.pi / 3))
        assert vals[2] == round(ipk * math.sin(2 * math.pi / 3))
        assert vals[3] == sum(vals[:3])
        assert vals[7] == sum(vals[4:7])

    def test_sign_flips_currents_only(self):
        a = sample_values(0.001, 1000.0, 7967.0, 60.0, 1)
        b = sample_values(0.001, 1000.0, 7967.0, 60.0, -1)
        assert b[:3] == tuple(-v for v in a[:3]) and b[4:] == a[4:]

    def test_values_clip_to_int32(self):
        vals = sample_values(1 / 240, 1e7, 7967.0, 60.0)
        assert vals[0] == (1 << 31) - 1

    def test_one_cycle_rms(self):
        window = [sample_values(k / RATE, 1000.0, 7967.0, 60.0)[0] for k in range(80)]
        assert rms_estimate(window) / 1000.0 == pytest.approx(1000.0, rel=1e-5)
        with pytest.raises(ValueError):
            rms_estimate(window[:-1])

    def test_sample_times(self):
        assert sample_time_ns(0) == 0
        assert sample_time_ns(4800) == SECOND
        assert sample_time_ns(1) == 208_333


class TestWaveform:
    def test_schedule_and_fault(self):
        w = Waveform(current_rms=((0, 1000), (2.0, 1500)),
                     faults=(FaultSegment(3.0, 3.5, 5.0, "A", polarity=-1),))
        assert w.current(1.0, "A") == (1000.0, 1)
        assert w.current(2.5, "A") == (1500.0, 1)
        assert w.current(3.2, "A") == (7500.0, -1)
        assert w.current(3.2, "B") == (1500.0, 1)
        assert w.current(3.5, "A") == (1500.0, 1)

    @pytest.mark.parametrize("kw", [dict(current_rms=((1.0, 5),)), dict(current_rms=((0, 5), (0, 6))),
                                    dict(current_rms=((0, -1),))])
    def test_bad_schedule(self, kw):
        with pytest.raises(ValueError):
            Waveform(**kw)

    @pytest.mark.parametrize("args", [(1, 0.5, 2, "A"), (0, 1, -1, "A"), (0, 1, 2, "A", 0)])
    def test_bad_fault(self, args):
        with pytest.raises(ValueError):
            FaultSegment(*args)


def rms_oracle(samples):
    a = np.asarray(samples[-80:], dtype=np.float64)
    return float(np.sqrt(np.mean(a * a))) / 1000.0


class TestOvercurrent:
    def run(self, amps_of_k, n):
        el = OvercurrentElement(ProtectionSettings())
        events = []
        for k in range(n):
            d, status = el.evaluate(sample_time_ns(k), sv_at(k, amps_of_k(k)))
            if d is not None:
                events.append((k, d))
        return events

    def test_trips_after_definite_delay(self):
        fault_k = 960
        events = self.run(lambda k: 5000.0 if k >= fault_k else 1000.0, 3000)
        # independent oracle: first sample where any phase RMS reaches pickup, plus 100 ms
        phases = [[], [], []]
        pickup_k = None
        for k in range(3000):
            vals = sv_at(k, 5000.0 if k >= fault_k else 1000.0).values
            for p in range(3):
                phases[p].append(vals[p])
            if k >= 79 and max(rms_oracle(ph) for ph in phases) >= 2000.0:
                pickup_k = k
                break
        trip_k = next(k for k in range(pickup_k, 3000) if sample_time_ns(k) - sample_time_ns(pickup_k) >= 100 * MS)
        assert events == [(trip_k, True)]

    def test_no_trip_below_pickup(self):
        assert self.run(lambda k: 1900.0, 2400) == []

    def test_short_pulse_resets_timer(self):
        # 50 ms of fault is shorter than the 100 ms delay
        events = self.run(lambda k: 5000.0 if 480 <= k < 720 else 1000.0, 2400)
        assert events == []

    def test_reset_after_fault_clears(self):
        events = self.run(lambda k: 5000.0 if 480 <= k < 1900 else 1000.0, 2400)
        assert [d for _, d in events] == [True, False]

    def test_duplicate_overwrites_last_sample(self):
        el = OvercurrentElement(ProtectionSettings())
        for k in range(80):
            el.evaluate(sample_time_ns(k), sv_at(k, 1000.0))
        _, status = el.evaluate(sample_time_ns(79), sv_at(79, 10_000.0))
        assert status == "overwrite"
        assert el.windows.windows[0].count == 80

    def test_gap_clears_window(self):
        el = OvercurrentElement(ProtectionSettings())
        for k in range(80):
            el.evaluate(sample_time_ns(k), sv_at(k, 1000.0))
        _, status = el.evaluate(sample_time_ns(90), sv_at(90, 1000.0))
        assert status == "gap" and not el.windows.full

    def test_wraparound_is_contiguous(self):
        el = OvercurrentElement(ProtectionSettings())
        statuses = {el.evaluate(sample_time_ns(k), sv_at(k, 1000.0))[1] for k in range(4700, 4900)}
        assert statuses == {"append"}


class TestDifferential:
    def feed(self, hv_of_k, lv_of_k, n, order="ab"):
        el = DifferentialElement(ProtectionSettings(), ("HV", "LV"))
        out = []
        for k in range(n):
            a = sv_at(k, hv_of_k(k), "HV", 1)
            b = sv_at(k, lv_of_k(k), "LV", -1)
            for s in ((a, b) if order == "ab" else (b, a)):
                d, status = el.evaluate(sample_time_ns(k), s)
                if d is not None:
                    out.append((k, d))
        return el, out

    def test_through_current_is_restrained(self):
        _, events = self.feed(lambda k: 3000.0, lambda k: 3000.0, 800)
        assert events == []

    @pytest.mark.parametrize("order", ["ab", "ba"])
    def test_internal_fault_trips(self, order):
        _, events = self.feed(lambda k: 5000.0 if k >= 400 else 1000.0, lambda k: 1000.0, 800, order)
        assert events and events[0][1] is True and 400 <= events[0][0] < 480

    def test_stream_loss(self):
        el = DifferentialElement(ProtectionSettings(), ("HV", "LV"))
        statuses = [el.evaluate(sample_time_ns(k), sv_at(k, 1000.0, "HV"))[1] for k in range(200)]
        assert "stream_loss" in statuses and el.stream_lost

    def test_needs_two_streams(self):
        with pytest.raises(ValueError):
            DifferentialElement(ProtectionSettings(), ("A",))

    def test_quantities(self):
        a = [sample_values(k / RATE, 1000.0, 1.0, 60.0, 1)[0] for k in range(80)]
        b = [sample_values(k / RATE, 1000.0, 1.0, 60.0, -1)[0] for k in range(80)]
        op, res = diff_quantities(a, b)
        assert op == 0.0
        assert res / 1000.0 == pytest.approx(1000.0, rel=1e-5)


class Recorder(Host):
    def __init__(self, host_id, mac):
        super().__init__(host_id, mac)
        self.frames = []

    def receive(self, pkt, port_name):
        self.frames.append((self.sim.now, pkt.decoded()))


def small_bus():
    sim = Simulator(0)
    fab = Fabric(sim, (0, 0))
    fab.add_switch("S", [1, 2, 3, 4])
    return sim, fab


GCFG = GooseConfig("IEDPROT/LLN0$GO$gcb", "IED", "IEDPROT/LLN0$ds", 0x3001, "01:0c:cd:01:00:01")


class TestGoosePublisher:
    def test_burst_then_heartbeat(self):
        sim, fab = small_bus()
        ied = ProtectionIed("IED", "00:00:00:00:00:01", "PIED_OC")
        fab.attach(ied, "goose", ("S", 1))
        rx = Recorder("RX", "00:00:00:00:00:02")
        fab.attach(rx, "p", ("S", 2))
        pub = GoosePublisher(ied, "goose", GCFG)
        sim.schedule(0, pub.start)
        sim.schedule(500 * MS, pub.publish, (True,), "test")
        sim.run(2 * SECOND)
        t0 = 500 * MS
        sent = [(t - t0, st, sq, tal) for t, st, sq, tal in pub.sent if t >= t0]
        gaps = [0, 2, 6, 14, 30, 1030]
        assert [s[0] for s in sent] == [g * MS for g in gaps]
        assert [s[1] for s in sent] == [2] * 6
        assert [s[2] for s in sent] == [0, 1, 2, 3, 4, 5]
        assert [s[3] for s in sent] == [2 * i for i in BURST_INTERVALS_MS] + [2000, 2000]
        # TAL always covers the gap to the next frame
        for (ta, _, _, tal), (tb, _, _, _) in zip(sent, sent[1:]):
            assert tb - ta < tal * MS
        assert pub.sent[0][:3] == (0, 1, 0)
        assert all(dec[1].all_data == (True,) for t, dec in rx.frames if t >= t0)

    def test_heartbeat_is_cancelled_by_new_state(self):
        sim, fab = small_bus()
        ied = ProtectionIed("IED", "00:00:00:00:00:01", "PIED_OC")
        fab.attach(ied, "goose", ("S", 1))
        pub = GoosePublisher(ied, "goose", GCFG)
        sim.schedule(0, pub.start)
        sim.schedule(999 * MS, pub.publish, (True,), "x")
        sim.run(1100 * MS)
        times = [t for t, *_ in pub.sent]
        assert 1000 * MS not in times

    def test_isolated_device_is_silent(self):
        sim, fab = small_bus()
        ied = ProtectionIed("IED", "00:00:00:00:00:01", "PIED_OC")
        fab.attach(ied, "goose", ("S", 1))
        rx = Recorder("RX", "00:00:00:00:00:02")
        fab.attach(rx, "p", ("S", 2))
        pub = GoosePublisher(ied, "goose", GCFG)
        sim.schedule(0, pub.start)
        sim.schedule(10 * MS, ied.set_health, "isolated", "test")
        sim.run(3 * SECOND)
        assert len(rx.frames) == 1
        assert sim.records_of("device_action", action="health")[0].detail["health"] == "isolated"


class TestBreaker:
    def apdu(self, go_id="IED", trip=True, test=False):
        return codec.GooseApdu("r", 2000, "d", go_id, 0, 2, 0, test, 1, False, 1, (trip,))

    def test_opens_once(self):
        st, v = cb_on_goose(BreakerState(), self.apdu(), {"IED"}, 5)
        assert (st.position, st.last_trip_time, st.opened_by, v) == ("open", 5, "IED", "opened")
        st2, v2 = cb_on_goose(st, self.apdu(), {"IED"}, 9)
        assert st2 == st and v2 == "already_open"

    @pytest.mark.parametrize("kw,verdict", [(dict(go_id="OTHER"), "unsubscribed"),
                                            (dict(test=True), "test"), (dict(trip=False), "no_trip")])
    def test_ignored(self, kw, verdict):
        st, v = cb_on_goose(BreakerState(), self.apdu(**kw), {"IED"}, 1)
        assert st == BreakerState() and v == verdict

    def test_breaker_device_logs(self):
        sim, fab = small_bus()
        cb = Breaker("CB", "00:00:00:00:00:09", {"IED"})
        fab.attach(cb, "goose", ("S", 1))
        src = Recorder("SRC", "00:00:00:00:00:02")
        fab.attach(src, "p", ("S", 2))
        dst = codec.MacAddress.parse("01:0c:cd:01:00:01")
        for go_id in ("OTHER", "OTHER", "IED"):
            src.send("p", codec.encode_goose(self.apdu(go_id), dst, src.mac, 1))
        sim.run(MS)
        acts = [r.detail["action"] for r in sim.records_of("device_action")]
        assert acts == ["diagnostic", "cb_open"]
        assert cb.opened_by_src == "00:00:00:00:00:02"
        cb.reset()
        assert cb.state.position == "closed"


class TestMergingUnitToRelay:
    def test_fault_trips_relay_and_publishes(self):
        sim, fab = small_bus()
        w = Waveform(faults=(FaultSegment(0.5, 2.0, 5.0, "MU/F"),))
        mu = MergingUnit("MU", "00:00:00:00:00:01", (SvStream("MU/F", 0x4001, "01:0c:cd:04:00:01"),), w)
        fab.attach(mu, "pb", ("S", 1))
        ied = ProtectionIed("IED", "00:00:00:00:00:02", "PIED_OC")
        fab.attach(ied, "sv", ("S", 2))
        fab.attach(ied, "goose", ("S", 3))
        pub = GoosePublisher(ied, "goose", GCFG)
        ied.add_function("oc", OvercurrentElement(ProtectionSettings()), pub, ("MU/F",))
        mu.start()
        sim.schedule(0, ied.start)
        sim.run(1 * SECOND)
        assert len(ied.decisions) == 1
        t, fn, op = ied.decisions[0]
        assert fn == "oc" and op is True
        assert 600 * MS <= t <= 620 * MS  # pickup within a cycle, then the 100 ms delay
        assert pub.st_num == 2

    def test_frames_are_valid_sv(self):
        w = Waveform()
        mu = MergingUnit("MU", "00:00:00:00:00:01", (SvStream("A", 1, "01:0c:cd:04:00:01"),
                                                     SvStream("B", 2, "01:0c:cd:04:00:02", sign=-1)), w)
        a, b = (codec.decode_frame(f) for f in mu.frames(4801))
        assert (a.sv_id, a.smp_cnt, b.sv_id) == ("A", 1, "B")
        assert b.values[:3] == tuple(-v for v in a.values[:3])

    def test_self_reported_failure_hook(self):
        sim, fab = small_bus()
        ied = ProtectionIed("IED", "00:00:00:00:00:02", "PIED_OC")
        fab.attach(ied, "sv", ("S", 2))
        seen = []
        ied.on_failure = lambda pid, reason: seen.append((pid, reason))
        ied.report_failure("cpu watchdog")
        assert seen == [("IED", "cpu watchdog")]
