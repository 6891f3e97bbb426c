"""Monitor program execution and sender behaviour."""

import pytest

from iotlbsim.clock import Clock, microseconds_to_cycles
from iotlbsim.devices import (FlushSender, Instruction, Monitor, MonitorOp,
                              MonitorProgram, NicSender, NicSenderConfig,
                              ProbeMode, QuerySender, QuerySenderConfig)
from iotlbsim.errors import MissingOperand, ProgramTooLong
from iotlbsim.timing import LatencyModel, calibrate, classify
from iotlbsim.tlb import Outcome, Replacement, Tlb, TlbConfig


def make_tlb(ways=118, **kw):
    kw.setdefault("device_domains", {0: 0, 1: 1})
    return Tlb(TlbConfig(num_sets=1, ways=ways, replacement=Replacement.LRU, **kw))


def make_monitor(**kw):
    kw.setdefault("timing", LatencyModel(rng_seed=1))
    kw.setdefault("clock", Clock())
    return Monitor(0, kw.pop("timing"), kw.pop("clock"), **kw)


THRESHOLD = calibrate(LatencyModel())


def test_program_length_limit():
    instrs = tuple(Instruction(MonitorOp.WAIT, 1) for _ in range(8))
    with pytest.raises(ProgramTooLong):
        MonitorProgram(instrs)
    MonitorProgram(instrs[:7])


def test_missing_operands():
    tlb = make_tlb()
    mon = make_monitor()  # no target, no eviction set
    with pytest.raises(MissingOperand):
        mon.run_program(MonitorProgram((Instruction(MonitorOp.TARGET_PRIME),)), tlb)
    with pytest.raises(MissingOperand):
        mon.run_program(MonitorProgram((Instruction(MonitorOp.EVSET_PRIME),)), tlb)


def test_wait_advances_clock_without_records():
    tlb = make_tlb()
    mon = make_monitor()
    records = mon.run_program(MonitorProgram((Instruction(MonitorOp.WAIT, 100),)), tlb)
    assert records == []
    assert mon.clock.cycles == 100


def test_prime_then_probe_is_hit():
    tlb = make_tlb()
    mon = make_monitor(target=7)
    program = MonitorProgram((Instruction(MonitorOp.TARGET_PRIME),
                              Instruction(MonitorOp.TARGET_PROBE)))
    records = mon.run_program(program, tlb)
    (index, latency), = records
    assert index == 1
    assert classify(latency, THRESHOLD) is Outcome.HIT


def test_full_capacity_evset_forces_target_miss():
    # 118 fresh addresses through a 118-entry structure evict anything
    tlb = make_tlb(ways=118)
    tlb.flush_all()
    evset = tuple(range(1000, 1118))
    mon = make_monitor(target=7, evset_prime_addrs=evset)
    program = MonitorProgram((Instruction(MonitorOp.TARGET_PRIME),
                              Instruction(MonitorOp.EVSET_PRIME),
                              Instruction(MonitorOp.TARGET_PROBE)))
    (_, latency), = mon.run_program(program, tlb)
    assert classify(latency, THRESHOLD) is Outcome.MISS


def test_probe_modes():
    tlb = make_tlb()
    evset = tuple(range(10))
    mon = make_monitor(evset_prime_addrs=evset)
    program = MonitorProgram((Instruction(MonitorOp.EVSET_PRIME),
                              Instruction(MonitorOp.EVSET_PROBE)),
                             probe_mode=ProbeMode.PER_ADDRESS)
    (_, latencies), = mon.run_program(program, tlb)
    assert len(latencies) == 10
    agg = MonitorProgram(program.instructions, probe_mode=ProbeMode.AGGREGATE)
    (_, total), = mon.run_program(agg, tlb)
    assert isinstance(total, int)


def test_probe_does_not_mutate_state():
    tlb = make_tlb()
    tlb.access(1, 55)
    mon = make_monitor(target=55)
    before = (tlb.occupancy(), sorted(tlb.resident_keys()))
    for _ in range(20):
        mon.probe_page(tlb, 99)   # missing page: no refill
        mon.probe_page(tlb, 55)   # present page of another domain: untouched
    assert (tlb.occupancy(), sorted(tlb.resident_keys())) == before


def test_run_program_deterministic_without_shuffle():
    def run():
        tlb = make_tlb()
        mon = make_monitor(target=3, evset_prime_addrs=tuple(range(40)),
                           timing=LatencyModel(rng_seed=4), clock=Clock())
        program = MonitorProgram((Instruction(MonitorOp.TARGET_PRIME),
                                  Instruction(MonitorOp.EVSET_PRIME),
                                  Instruction(MonitorOp.TARGET_PROBE)))
        return mon.run_program(program, tlb), mon.clock.cycles
    assert run() == run()


def test_shuffle_probe_order_permutes_accesses():
    evset = tuple(range(30))
    mon = make_monitor(evset_prime_addrs=evset, shuffle_probe_order=True)
    orders = {tuple(mon._ordered(evset)) for _ in range(5)}
    assert len(orders) > 1
    assert all(sorted(o) == list(evset) for o in orders)


# -- query sender ---------------------------------------------------------------


def test_query_footprint_fixed_and_rows_independent():
    sender = QuerySender(1, QuerySenderConfig(rng_seed=5))
    assert len(sender.footprint) == 19
    tlb = make_tlb()
    clock = Clock()
    sender.run_query(tlb, clock, rows=0)
    keys_after_first = sorted(tlb.resident_keys())
    sender.run_query(tlb, clock, rows=409_600)
    assert sorted(tlb.resident_keys()) == keys_after_first
    assert clock.seconds == pytest.approx(0.6)


def test_query_footprint_zero_pages():
    sender = QuerySender(1, QuerySenderConfig(footprint_pages=0))
    tlb = make_tlb()
    sender.run_query(tlb, Clock())
    assert tlb.occupancy()[1] == 0


def test_query_footprint_redrawn_per_seed():
    a = QuerySender(1, QuerySenderConfig(rng_seed=1))
    b = QuerySender(1, QuerySenderConfig(rng_seed=2))
    assert a.footprint != b.footprint


# -- nic sender -------------------------------------------------------------------


def test_nic_reboot_redraws_buffer_keeps_pinned():
    cfg = NicSenderConfig(pinned_page=1 << 30, reboot_seed=3, realloc_span=128)
    nic = NicSender(2, cfg)
    first = nic.buffer_pages
    assert first[0] == cfg.pinned_page
    nic.reboot()
    assert nic.buffer_pages[0] == cfg.pinned_page
    assert nic.buffer_pages != first


def test_nic_traffic_touches_pinned_every_packet():
    cfg = NicSenderConfig(pinned_page=1 << 30, reboot_seed=4)
    nic = NicSender(2, cfg)
    tlb = Tlb(TlbConfig(num_sets=1, ways=64, replacement=Replacement.LRU,
                        device_domains={2: 2}))
    nic.on_packet(tlb)
    assert tlb.is_resident(2, cfg.pinned_page)


def test_nic_no_traffic_no_state_change():
    tlb = Tlb(TlbConfig(num_sets=1, ways=64, replacement=Replacement.LRU,
                        device_domains={0: 0, 2: 2}))
    tlb.access(0, 1)
    before = sorted(tlb.resident_keys())
    NicSender(2, NicSenderConfig())  # instantiation alone must not touch the tlb
    assert sorted(tlb.resident_keys()) == before


# -- flush sender ------------------------------------------------------------------


def test_flush_sender_bits():
    tlb = make_tlb()
    clock = Clock()
    sender = FlushSender()
    tlb.access(0, 9)
    sender.send_bit(1, tlb, clock)
    assert not tlb.is_resident(0, 9)
    tlb.access(0, 9)
    sender.send_bit(0, tlb, clock)
    assert tlb.is_resident(0, 9)
    assert clock.cycles == 2 * microseconds_to_cycles(17)


def test_flush_sender_alternating_101():
    tlb = make_tlb()
    clock = Clock()
    sender = FlushSender()
    outcomes = []
    for bit in (1, 0, 1):
        tlb.access(0, 9)                      # monitor re-primes
        sender.send_bit(bit, tlb, clock)
        outcomes.append(tlb.probe(0, 9))
    assert outcomes == [Outcome.MISS, Outcome.HIT, Outcome.MISS]
