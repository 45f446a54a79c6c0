from __future__ import annotations

import math

import numpy as np
import pytest

from noisyauth.bounds import anchor_check_bound
from noisyauth.channel import DMC
from noisyauth.codes import estimate_error_rate
from noisyauth.errors import DomainError, InfeasibleError, ProtocolError
from noisyauth.setauth import (Accept, Alice, Bob, DmcInput, DmcOutput, Noiseless, Reject, RejectMark, ceil_sqrt,
                               message_distribution, round_count, run_honest, run_session, setup)
from noisyauth.setsys import make_schedule

from conftest import hand_instance


def test_ceil_sqrt():
    assert [ceil_sqrt(n) for n in (1, 4, 5, 400, 401)] == [1, 2, 3, 20, 21]


def test_desk_instance_shape(desk_instance):
    inst = desk_instance
    sched = make_schedule(2 ** 20, 400, inst.schedule.beta1, inst.schedule.beta2, eps_override=1 / 16)
    assert inst.phi == sched.phi and inst.schedule.v_seq == sched.v_seq
    assert inst.k == 20 and inst.n_total == 420
    assert inst.gamma == pytest.approx(0.4, abs=1e-7)
    assert inst.code.size == inst.schedule.final_size
    assert round_count(inst) == inst.phi + 1


def test_setup_rejects_identical_channels(rng):
    with pytest.raises(InfeasibleError):
        setup(DMC.bsc(0.1), DMC.bsc(0.1), 64, 100, rng=rng)


def test_setup_rejects_zero_capacity(rng):
    W1 = DMC([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(InfeasibleError):
        setup(W1, DMC.bsc(0.3), 64, 100, rng=rng)


def test_setup_is_deterministic():
    a = setup(DMC.bsc(0.05), DMC.bsc(0.25), 4, 100, rng=np.random.default_rng(3))
    b = setup(DMC.bsc(0.05), DMC.bsc(0.25), 4, 100, rng=np.random.default_rng(3))
    assert np.array_equal(a.code.codebook(), b.code.codebook())


def test_direct_instance_is_degenerate(direct_instance):
    assert direct_instance.phi == 0 and round_count(direct_instance) == 1
    assert direct_instance.set_systems == ()


def test_small_instance_levels_are_verified(small_instance):
    inst = small_instance
    assert inst.phi == 2
    S = inst.system(1)
    assert S.materialized and (S.v, S.b) == inst.schedule.v_seq


# -- traces ---------------------------------------------------------------------------

def _flows(transcript):
    return [line.split()[1:3] for line in transcript]


def test_honest_trace_structure(small_instance):
    inst = small_instance
    for seed in range(30):
        tr = []
        res = run_session(inst, seed % inst.v1, np.random.default_rng(seed), transcript=tr)
        kinds = _flows(tr)
        dmc = [k for k in kinds if k[1] == "dmc_in"]
        assert dmc == [["A->W", "dmc_in"]]
        noiseless = [k[0] for k in kinds if k[1] == "noiseless"]
        assert noiseless == ["A->B", "B->A"][:inst.phi]
        # sender-side consistency: s_l lies in block s_{l+1}
        sent = {**res.alice.sent, **res.bob.sent}
        for level in range(1, inst.phi):
            assert inst.member(level, sent[level + 1], sent[level])
        assert isinstance(res.outcome, (Accept, Reject))


def test_transcripts_are_deterministic(small_instance):
    runs = []
    for _ in range(2):
        tr = []
        for sid in range(5):
            run_session(small_instance, sid, np.random.default_rng(100 + sid), transcript=tr, session_id=sid)
        runs.append(tr)
    assert runs[0] == runs[1]


def test_phi_two_alice_second_action_is_dmc(small_instance):
    rng = np.random.default_rng(0)
    alice = Alice(small_instance, 5, rng.spawn(1)[0])
    bob = Bob(small_instance, rng.spawn(1)[0])
    first = alice.next_flow(None)
    assert first == Noiseless(5)
    reply = bob.next_flow(first)
    assert isinstance(reply, Noiseless)
    final = alice.next_flow(reply)
    assert isinstance(final, DmcInput) and final.x.size == small_instance.n_total
    assert np.array_equal(final.x, small_instance.dmc_word(reply.value))
    with pytest.raises(ProtocolError):
        alice.next_flow(reply)


def test_alice_rejects_failed_membership(small_instance):
    S = small_instance.system(1)
    s = 7
    bad = next(b for b in range(S.b) if not S.contains(b, s))
    alice = Alice(small_instance, s, np.random.default_rng(0))
    alice.next_flow(None)
    assert isinstance(alice.next_flow(Noiseless(bad)), RejectMark)
    alice = Alice(small_instance, s, np.random.default_rng(0))
    alice.next_flow(None)
    assert isinstance(alice.next_flow(Noiseless(-3)), RejectMark)
    alice = Alice(small_instance, s, np.random.default_rng(0))
    alice.next_flow(None)
    assert isinstance(alice.next_flow(DmcOutput(np.zeros(3, int))), RejectMark)


def test_alice_source_range(small_instance):
    with pytest.raises(DomainError):
        Alice(small_instance, small_instance.v1, np.random.default_rng(0))


def test_bob_rejects_wrong_flow_kinds(small_instance):
    bob = Bob(small_instance, np.random.default_rng(0))
    assert isinstance(bob.next_flow(RejectMark()), Reject)
    bob = Bob(small_instance, np.random.default_rng(0))
    assert isinstance(bob.next_flow(DmcOutput(np.zeros(small_instance.n_total, int))), Reject)


def test_empty_block_list_rejects():
    # element 2 lies in no block; a tampered s'_1 = 2 leaves Bob nothing to draw
    W1, W2 = DMC.identity(2), DMC.bsc(0.3)
    inst = hand_instance(W1, W2, 3, [[0, 1], [0]], [[0, 0, 0, 0], [1, 1, 1, 1]])
    bob = Bob(inst, np.random.default_rng(0))
    assert isinstance(bob.next_flow(Noiseless(2)), Reject)


def test_decode_mismatch_rejects(small_instance):
    inst = small_instance
    rng = np.random.default_rng(5)
    alice, bob = Alice(inst, 1, rng), Bob(inst, rng)
    reply = bob.next_flow(alice.next_flow(None))
    alice.next_flow(reply)
    other = (reply.value + 1) % inst.code.size
    z = inst.dmc_word(other)  # perfect prefix, wrong codeword
    assert isinstance(bob.next_flow(DmcOutput(z)), Reject)


def test_anchor_check_radius(small_instance):
    inst = small_instance
    a = inst.anchor
    k = inst.k
    assert inst.anchor_check(np.full(k, a))
    assert not inst.anchor_check(np.full(k, 1 - a))


# -- honest acceptance ----------------------------------------------------------------

def test_identity_channel_always_accepts():
    inst = setup(DMC.identity(2), DMC.bsc(0.25), 64, 400, beta2=0.01, eps_override=0.5,
                 rng=np.random.default_rng(1))
    assert inst.phi == 2
    rng = np.random.default_rng(2)
    for s in range(0, 64, 3):
        assert run_honest(inst, s, rng) == Accept(s)


def _acceptance(inst, trials, seed):
    rng = np.random.default_rng(seed)
    acc = 0
    for _ in range(trials):
        s = int(rng.integers(inst.v1))
        acc += run_honest(inst, s, rng) == Accept(s)
    return acc / trials


@pytest.mark.parametrize("name", ["small_instance", "direct_instance"])
def test_honest_acceptance_above_error_budget(name, request):
    inst = request.getfixturevalue(name)
    trials = 1000
    p = _acceptance(inst, trials, 77)
    code_err = estimate_error_rate(inst.code, inst.W1, 4000, np.random.default_rng(78)).average
    budget = 1 - (code_err + anchor_check_bound(inst.k, inst.gamma, inst.W1.output_size))
    sigma = math.sqrt(max(p * (1 - p), 1 / trials) / trials)
    assert p >= budget - 3 * sigma


def test_message_distribution(small_instance, direct_instance):
    p = message_distribution(small_instance)
    assert p.shape == (small_instance.code.size,) and p.sum() == pytest.approx(1)
    assert np.allclose(message_distribution(direct_instance), 0.25)


def test_message_distribution_hand_built():
    inst = hand_instance(DMC.identity(2), DMC.bsc(0.3), 2, [[0, 1], [0]], [[0, 0, 0, 0], [1, 1, 1, 1]])
    # s=0 -> block 0 or 1 with prob 1/2 each; s=1 -> block 0
    assert np.allclose(message_distribution(inst), [0.75, 0.25])
