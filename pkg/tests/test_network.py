import numpy as np
import pytest

from monotonic_nsm.core_dynamics import SynapseKind
from monotonic_nsm.network import (TABLE_FAMILIES, InvalidTopologyError, Model, NetworkSpec, PopulationSpec,
                                   ProjectionSpec, Role, build_ei_primitive, build_nsm_topology, gate_id,
                                   sample_connectivity, state_id, validate_connectivity)

# (group, connection, receptor, probability) as printed in the connection table
TABLE_LITERAL = [
    ("WTA", "state -> inh", "NMDA", 0.60),
    ("WTA", "inh -> state", "GABA_B", 0.60),
    ("WTA", "state -> state", "NMDA", 0.83),
    ("WTA", "inh -> inh", "GABA_B", 0.20),
    ("GATING", "gate -> inh", "NMDA", 0.30),
    ("GATING", "inh -> gate", "GABA_B", 0.30),
    ("GATING", "gate -> gate", "NMDA", 0.50),
    ("GATING", "inh -> inh", "GABA_B", 0.50),
    ("MONOTONIC", "gate -> state", "GABA_B", 1.00),
    ("MONOTONIC", "state -> gate", "GABA_B", 1.00),
    ("MONOTONIC", "state -> gate", "AMPA", 1.00),
    ("INPUT", "lif -> state", "AMPA", 1.00),
]


def test_table_cross_check():
    rows = [(g, f"{s} -> {t}", k.receptor, p) for g, s, t, k, p in TABLE_FAMILIES.values()]
    assert sorted(rows) == sorted(TABLE_LITERAL)
    assert len(set(rows)) == len(rows)
    spec = build_nsm_topology()
    for fam, (_, _, _, kind, p) in TABLE_FAMILIES.items():
        projs = [pr for pr in spec.projections if pr.family == fam]
        assert projs, fam
        assert all(pr.kind is kind and pr.p == p for pr in projs)


def test_population_accounting():
    spec = build_nsm_topology(4, 16)
    roles = [p.role for p in spec.populations]
    assert roles.count(Role.STATE) == 4
    assert roles.count(Role.WTA_INH) == 1
    assert roles.count(Role.GATE) == 3
    assert roles.count(Role.GATE_INH) == 3
    assert spec.core_neuron_count() == 176
    enc = spec.by_role(Role.INPUT_ENCODER)
    assert [p.size for p in enc] == [1] * 4 and all(p.model is Model.LIF for p in enc)
    assert spec.n_neurons == 180


def test_recurrent_state_projection():
    spec = build_nsm_topology(4, 16)
    rec = [p for p in spec.projections if p.source == p.target and p.source.startswith("state")]
    assert len(rec) == 4
    assert all(p.p == 0.83 and p.kind is SynapseKind.SLOW_EXC for p in rec)


def test_two_states_single_gate():
    spec = build_nsm_topology(2, 16)
    gates = spec.by_role(Role.GATE)
    assert [g.id for g in gates] == ["gate1"]
    assert len(spec.by_role(Role.GATE_INH)) == 1
    into = [p.target for p in spec.projections if p.family == "monotonic_gate_state"]
    assert into == ["state1"]


def test_shared_gate_inhibitor_option():
    spec = build_nsm_topology(4, 16, shared_gate_inh=True)
    assert [p.id for p in spec.by_role(Role.GATE_INH)] == ["gate_inh"]
    assert spec.core_neuron_count() == 16 * 9


def test_reset_state_has_no_gate_input():
    spec = build_nsm_topology()
    into0 = [p for p in spec.projections if p.target == state_id(0) and p.kind is SynapseKind.SLOW_INH]
    assert [p.source for p in into0] == ["wta_inh"]


def test_gate_disinhibited_by_previous_state_only():
    spec = build_nsm_topology()
    for k in range(1, 4):
        srcs = [p.source for p in spec.projections if p.target == gate_id(k) and p.family == "monotonic_state_gate_off"]
        assert srcs == [state_id(k - 1)]


def test_rearm_targets():
    spec = build_nsm_topology(4)
    on = {(p.source, p.target) for p in spec.projections if p.family == "monotonic_state_gate_on"}
    expected = set()
    for k in range(4):
        for j in range(1, 4):
            if j < k or j >= k + 2:
                expected.add((state_id(k), gate_id(j)))
    assert on == expected
    # the next state's gate is never re-armed by the current state
    assert all((state_id(k), gate_id(k + 1)) not in on for k in range(3))


def test_wta_only_has_no_gates():
    spec = build_nsm_topology(gating=False)
    assert not spec.by_role(Role.GATE) and not spec.by_role(Role.GATE_INH)
    assert spec.core_neuron_count() == 80


def test_invalid_topologies():
    with pytest.raises(InvalidTopologyError):
        build_nsm_topology(1)
    with pytest.raises(InvalidTopologyError):
        build_nsm_topology(4, 0)
    with pytest.raises(InvalidTopologyError):
        build_nsm_topology(weights={"nope": 1.0})


def _pair(p, seed=0, same=False):
    a = PopulationSpec("a", 16, Model.ADEX, build_nsm_topology().populations[0].params, Role.STATE, 0)
    b = PopulationSpec("b", 16, Model.ADEX, a.params, Role.STATE, 1)
    tgt = "a" if same else "b"
    return NetworkSpec((a, b), (ProjectionSpec("a", tgt, SynapseKind.FAST_EXC, p, 1e-12, "x"),), seed)


def test_full_and_empty_projection():
    assert len(sample_connectivity(_pair(1.0))) == 256
    assert len(sample_connectivity(_pair(0.0))) == 0


def test_no_autapses():
    m = sample_connectivity(_pair(1.0, same=True))
    assert len(m) == 240
    assert not np.any(m.src == m.dst)


def test_binomial_statistics():
    n, p, seeds = 256, 0.6, 10_000
    counts = np.array([len(sample_connectivity(_pair(p, seed=s))) for s in range(seeds)])
    se = np.sqrt(n * p * (1 - p) / seeds)
    assert abs(counts.mean() - n * p) < 3 * se
    assert abs(counts.var() - n * p * (1 - p)) / (n * p * (1 - p)) < 0.05


def test_seed_determinism():
    spec = build_nsm_topology(seed=7)
    a, b = sample_connectivity(spec), sample_connectivity(spec)
    for f in ("src", "dst", "kind", "weight", "projection"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    c = sample_connectivity(build_nsm_topology(seed=8))
    assert not (len(a) == len(c) and np.array_equal(a.src, c.src) and np.array_equal(a.dst, c.dst))


def test_edges_respect_endpoints():
    spec = build_nsm_topology(seed=3)
    m = sample_connectivity(spec)
    validate_connectivity(spec, m)
    off = spec.offsets()
    for i, proj in enumerate(spec.projections):
        e = m.edges_of(i)
        s0, d0 = off[proj.source], off[proj.target]
        assert np.all((e[:, 0] >= s0) & (e[:, 0] < s0 + spec.population(proj.source).size))
        assert np.all((e[:, 1] >= d0) & (e[:, 1] < d0 + spec.population(proj.target).size))
        assert np.all(m.kind[m.projection == i] == int(proj.kind))


def test_tampered_matrix_rejected():
    spec = build_nsm_topology(seed=3)
    m = sample_connectivity(spec)
    bad = m.kind.copy()
    bad[0] = (bad[0] + 1) % 4
    import dataclasses
    with pytest.raises(InvalidTopologyError):
        validate_connectivity(spec, dataclasses.replace(m, kind=bad))


def test_edge_csv(tmp_path):
    spec = build_ei_primitive(seed=1)
    m = sample_connectivity(spec)
    path = tmp_path / "edges.csv"
    m.to_csv(path, spec)
    lines = path.read_text().splitlines()
    assert lines[0] == "src,dst,kind,weight"
    assert len(lines) == len(m) + 1


def test_ei_primitive():
    spec = build_ei_primitive()
    assert [p.id for p in spec.populations] == ["state0", "wta_inh", "input0"]
    assert {p.family for p in spec.projections} == {"wta_state_state", "wta_state_inh", "wta_inh_state",
                                                    "wta_inh_inh", "input_lif_state"}


def test_cam_fan_in_warning(caplog):
    import monotonic_nsm.network as net
    net._cam_warned.clear()
    with caplog.at_level("WARNING", logger="monotonic_nsm.network"):
        sample_connectivity(build_nsm_topology())
    assert any("CAM" in r.message for r in caplog.records)
