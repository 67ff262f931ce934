"""Scenario parsing, topology generation, and CLI exit codes.

Exit codes under test: 0 all analyses pass, 2 a verdict failed,
3 a hypothesis could not be verified, 4 config problems, 5 numerical
failures. Frozen topology value: the alternating leader-follower pair
at unit weight integrates to 1.0 on both off-diagonal entries over one
full cycle of length 2.
"""

import math
import os

import numpy as np
import pytest

from consensus_lab import (
    InvalidSpec,
    ParseError,
    ValidationError,
    evaluate_schedule,
    generate_topology,
    integrate_schedule,
    parse_config,
    resolve_initial_state,
    run_scenario,
)
from consensus_lab.scenario_cli import main


RING_DEMO = """\
name: ring-demo
nodes: 3
horizon: 6.0
seed: 7
topology:
  kind: ring
  weight: 1.0
initial_state: [1.0, 0.0, -1.0]
analyses:
  - kind: connectivity
    delta: 0.05
    window: 1.0
  - kind: audit
    functionals: [spread, max_component]
  - kind: certificate
    delta: 0.05
    window: 1.0
    root: 1
  - kind: spectral
    delta: 0.05
"""

ISOLATED_NODE = """\
nodes: 3
horizon: 2.0
topology:
  kind: constant
  matrix:
    - [-1.0, 1.0, 0.0]
    - [1.0, -1.0, 0.0]
    - [0.0, 0.0, 0.0]
initial_state: [1.0, 0.0, -1.0]
analyses:
  - kind: connectivity
    delta: 0.1
    window: 1.0
"""

WRONG_ROOT = """\
nodes: 2
horizon: 2.0
topology:
  kind: constant
  matrix:
    - [-1.0, 1.0]
    - [0.0, 0.0]
initial_state: [1.0, 0.0]
analyses:
  - kind: certificate
    delta: 0.1
    window: 1.0
    root: 1
"""

SHORT_DELAY_WINDOW = """\
nodes: 2
horizon: 0.5
delay:
  tau: 5.0
topology:
  kind: line
initial_state: [1.0, -1.0]
analyses:
  - kind: audit
    functionals: [delayed_spread]
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestParsing:
    def test_minimal_roundtrip(self):
        cfg = parse_config(RING_DEMO)
        assert cfg.name == "ring-demo"
        assert cfg.n == 3 and cfg.horizon == 6.0 and cfg.t0 == 0.0
        assert cfg.seed == 7 and cfg.delay is None
        assert len(cfg.analyses) == 4
        assert cfg.initial_state == (1.0, 0.0, -1.0)

    def test_missing_required_key(self):
        with pytest.raises(ValidationError, match="horizon"):
            parse_config("nodes: 2\ntopology: {kind: ring}\n"
                         "initial_state: [0, 1]\n")

    def test_unknown_top_level_key(self):
        text = RING_DEMO + "extra_knob: 3\n"
        with pytest.raises(ValidationError, match="extra_knob"):
            parse_config(text)

    def test_yaml_syntax_error_carries_line(self):
        with pytest.raises(ParseError) as err:
            parse_config("nodes: 2\ntopology: [unclosed\n")
        assert err.value.line is not None

    def test_initial_state_length_checked(self):
        bad = RING_DEMO.replace("[1.0, 0.0, -1.0]", "[1.0, 0.0]")
        with pytest.raises(ValidationError, match="initial_state"):
            parse_config(bad)

    def test_sampled_initial_state_needs_seed(self):
        text = """\
nodes: 2
horizon: 1.0
topology: {kind: ring}
initial_state: {distribution: uniform, low: -1.0, high: 1.0}
"""
        with pytest.raises(ValidationError, match="seed"):
            parse_config(text)
        assert parse_config(text + "seed: 3\n").seed == 3

    def test_random_switching_needs_seed(self):
        text = """\
nodes: 3
horizon: 2.0
topology:
  kind: random_switching
  period: 0.5
  link_probability: 0.8
  weight_range: [0.5, 1.5]
initial_state: [1.0, 0.0, -1.0]
"""
        with pytest.raises(ValidationError, match="seed"):
            parse_config(text)
        assert parse_config(text + "seed: 11\n").topology["kind"] == \
            "random_switching"

    def test_sinusoidal_depth_bounded(self):
        text = """\
nodes: 2
horizon: 1.0
topology:
  kind: sinusoidal
  depth: 1.5
  period: 1.0
  weights: [[0.0, 1.0], [1.0, 0.0]]
initial_state: [1.0, -1.0]
"""
        with pytest.raises(ValidationError, match="depth"):
            parse_config(text)

    def test_potential_audit_needs_constant_coupling(self):
        text = """\
nodes: 2
horizon: 1.0
topology:
  kind: sinusoidal
  depth: 0.5
  period: 1.0
  weights: [[0.0, 1.0], [1.0, 0.0]]
initial_state: [1.0, -1.0]
analyses:
  - kind: audit
    functionals: [potential]
"""
        with pytest.raises(ValidationError, match="potential"):
            parse_config(text)

    def test_delayed_spread_needs_delay_section(self):
        text = """\
nodes: 2
horizon: 1.0
topology: {kind: line}
initial_state: [1.0, -1.0]
analyses:
  - kind: audit
    functionals: [delayed_spread]
"""
        with pytest.raises(ValidationError, match="delay"):
            parse_config(text)

    def test_weighted_functional_name_checked_at_parse_time(self):
        base = """\
nodes: 2
horizon: 1.0
topology: {kind: line}
initial_state: [1.0, -1.0]
analyses:
  - kind: audit
    functionals: ['weighted:%s']
"""
        with pytest.raises(ValidationError, match="weighted"):
            parse_config(base % "entropy")
        cfg = parse_config(base % "square")
        assert cfg.analyses[0]["functionals"] == ["weighted:square"]

    def test_unknown_topology_and_analysis_kinds(self):
        with pytest.raises(ValidationError, match="topology.kind"):
            parse_config("nodes: 2\nhorizon: 1.0\n"
                         "topology: {kind: torus}\ninitial_state: [0, 1]\n")
        with pytest.raises(ValidationError, match="kind"):
            parse_config("nodes: 2\nhorizon: 1.0\n"
                         "topology: {kind: ring}\ninitial_state: [0, 1]\n"
                         "analyses:\n  - kind: vibes\n")

    def test_certificate_root_in_range(self):
        bad = RING_DEMO.replace("root: 1", "root: 5")
        with pytest.raises(ValidationError, match="root"):
            parse_config(bad)

    def test_scalar_sanity(self):
        with pytest.raises(ValidationError, match="nodes"):
            parse_config("nodes: 0\nhorizon: 1.0\n"
                         "topology: {kind: constant, weights: [[0]]}\n"
                         "initial_state: [0]\n")
        with pytest.raises(ValidationError, match="horizon"):
            parse_config(RING_DEMO.replace("horizon: 6.0", "horizon: -1.0"))

    def test_constant_needs_exactly_one_matrix_form(self):
        text = """\
nodes: 2
horizon: 1.0
topology:
  kind: constant
  matrix: [[-1.0, 1.0], [1.0, -1.0]]
  weights: [[0.0, 1.0], [1.0, 0.0]]
initial_state: [1.0, -1.0]
"""
        with pytest.raises(ValidationError):
            parse_config(text)
        with pytest.raises(ValidationError):
            parse_config(text.replace("  matrix: [[-1.0, 1.0], [1.0, -1.0]]\n",
                                      "").replace(
                "  weights: [[0.0, 1.0], [1.0, 0.0]]\n", ""))


class TestTopologyGeneration:
    def test_ring_entries(self):
        cfg = parse_config(RING_DEMO)
        sch = generate_topology(cfg.topology, cfg.n, 0.0, 6.0, None)
        A = evaluate_schedule(sch, 0.0).entries
        for k in range(3):
            assert A[k, (k + 1) % 3] == 1.0
            assert A[(k + 1) % 3, k] == 0.0
            assert A[k, k] == -1.0
        assert sch.t_start == 0.0 and sch.t_end == 6.0

    def test_star_hub_selection(self):
        spec = {"kind": "star", "hub": 2, "weight": 0.5}
        sch = generate_topology(spec, 4, 0.0, 1.0, None)
        A = evaluate_schedule(sch, 0.0).entries
        hub = 1
        for k in range(4):
            if k != hub:
                assert A[k, hub] == 0.5
                assert A[hub, k] == 0.0

    def test_line_direction_flag(self):
        both = evaluate_schedule(
            generate_topology({"kind": "line"}, 3, 0.0, 1.0, None), 0.0).entries
        assert both[1, 0] == 1.0 and both[0, 1] == 1.0
        directed = evaluate_schedule(
            generate_topology({"kind": "line", "bidirectional": False},
                              3, 0.0, 1.0, None), 0.0).entries
        assert directed[1, 0] == 1.0 and directed[0, 1] == 0.0

    def test_alternating_cycle_integral_frozen(self):
        spec = {"kind": "alternating_leader_follower", "period": 2.0}
        sch = generate_topology(spec, 2, 0.0, 4.0, None)
        w = integrate_schedule(sch, 0.0, 2.0)
        assert w.entries[0, 1] == pytest.approx(1.0, abs=1e-12)
        assert w.entries[1, 0] == pytest.approx(1.0, abs=1e-12)
        first = evaluate_schedule(sch, 0.0).entries
        assert first[1, 0] == 1.0 and first[0, 1] == 0.0

    def test_alternating_broadcasts_to_all_followers(self):
        spec = {"kind": "alternating_leader_follower", "period": 1.0,
                "weight": 2.0}
        sch = generate_topology(spec, 4, 0.0, 2.0, None)
        A = evaluate_schedule(sch, 0.0).entries
        assert all(A[k, 0] == 2.0 for k in range(1, 4))
        B = evaluate_schedule(sch, 0.5).entries
        assert B[0, 1] == 2.0 and B[2, 1] == 2.0 and B[3, 1] == 2.0

    def test_random_switching_reproducible(self):
        spec = {"kind": "random_switching", "period": 0.5,
                "link_probability": 0.7, "weight_range": [0.5, 1.5],
                "seed": 42}
        a = generate_topology(spec, 4, 0.0, 3.0, None)
        b = generate_topology(spec, 4, 0.0, 3.0, None)
        assert len(a.segments) == len(b.segments) == 6
        for sa, sb in zip(a.segments, b.segments):
            np.testing.assert_array_equal(sa.generator.entries,
                                          sb.generator.entries)
        other = generate_topology({**spec, "seed": 43}, 4, 0.0, 3.0, None)
        diffs = sum(
            not np.array_equal(sa.generator.entries, so.generator.entries)
            for sa, so in zip(a.segments, other.segments))
        assert diffs > 0

    def test_random_switching_weights_in_range(self):
        spec = {"kind": "random_switching", "period": 1.0,
                "link_probability": 0.6, "weight_range": [0.5, 1.5],
                "seed": 5}
        sch = generate_topology(spec, 5, 0.0, 10.0, None)
        for seg in sch.segments:
            off = seg.generator.entries.copy()
            np.fill_diagonal(off, 0.0)
            nz = off[off != 0.0]
            assert np.all((nz >= 0.5) & (nz <= 1.5))

    def test_scenario_seed_feeds_topology(self):
        spec = {"kind": "random_switching", "period": 1.0,
                "link_probability": 0.5, "weight_range": [0.5, 1.0]}
        a = generate_topology(spec, 3, 0.0, 2.0, seed=9)
        b = generate_topology(spec, 3, 0.0, 2.0, seed=9)
        for sa, sb in zip(a.segments, b.segments):
            np.testing.assert_array_equal(sa.generator.entries,
                                          sb.generator.entries)

    def test_piecewise_segments_and_coverage(self):
        spec = {"kind": "piecewise", "pieces": [
            {"until": 1.0, "weights": [[0.0, 1.0], [0.0, 0.0]]},
            {"until": 2.0, "weights": [[0.0, 0.0], [1.0, 0.0]]},
        ]}
        sch = generate_topology(spec, 2, 1.0, 2.0, None)
        assert evaluate_schedule(sch, 1.5).entries[0, 1] == 1.0
        assert evaluate_schedule(sch, 2.5).entries[1, 0] == 1.0
        with pytest.raises(InvalidSpec):
            generate_topology(spec, 2, 0.0, 5.0, None)

    def test_sinusoidal_modulation(self):
        spec = {"kind": "sinusoidal", "depth": 0.5, "period": 1.0,
                "weights": [[0.0, 2.0], [2.0, 0.0]]}
        sch = generate_topology(spec, 2, 0.0, 4.0, None)
        at_zero = evaluate_schedule(sch, 0.0).entries
        assert at_zero[0, 1] == pytest.approx(2.0, abs=1e-12)
        at_crest = evaluate_schedule(sch, 0.25).entries
        assert at_crest[0, 1] == pytest.approx(3.0, abs=1e-12)
        assert at_crest[0, 0] == pytest.approx(-3.0, abs=1e-12)

    def test_resolve_initial_state(self):
        cfg = parse_config(RING_DEMO)
        np.testing.assert_array_equal(resolve_initial_state(cfg),
                                      [1.0, 0.0, -1.0])
        sampled = parse_config("""\
nodes: 4
horizon: 1.0
seed: 12
topology: {kind: ring}
initial_state: {distribution: uniform, low: -2.0, high: 2.0}
""")
        x1 = resolve_initial_state(sampled)
        x2 = resolve_initial_state(sampled)
        np.testing.assert_array_equal(x1, x2)
        assert np.all((x1 >= -2.0) & (x1 <= 2.0))


class TestCommandLine:
    def test_run_passes_and_writes_outputs(self, tmp_path, capsys):
        cfg = write(tmp_path, "demo.yaml", RING_DEMO)
        out = tmp_path / "out"
        assert main(["run", cfg, "--output-dir", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "verdict: PASS (exit 0)" in stdout
        assert "[PASS] connectivity" in stdout
        report = (out / "report.txt").read_text()
        assert "verdict: PASS" in report
        csv_lines = (out / "trajectory.csv").read_text().splitlines()
        assert csv_lines[0] == "time,x_1,x_2,x_3,V_spread"
        first = csv_lines[1].split(",")
        assert float(first[0]) == 0.0
        assert float(first[4]) == pytest.approx(2.0)

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = write(tmp_path, "demo.yaml", RING_DEMO)
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert main(["run", cfg, "--output-dir", str(a)]) == 0
        assert main(["run", cfg, "--output-dir", str(b)]) == 0
        assert (a / "trajectory.csv").read_bytes() == \
            (b / "trajectory.csv").read_bytes()

    def test_verdict_failure_exits_2(self, tmp_path, capsys):
        cfg = write(tmp_path, "isolated.yaml", ISOLATED_NODE)
        assert main(["run", cfg, "--output-dir", str(tmp_path / "o")]) == 2
        assert "[FAIL] connectivity" in capsys.readouterr().out

    def test_unverified_hypothesis_exits_3(self, tmp_path, capsys):
        cfg = write(tmp_path, "wrongroot.yaml", WRONG_ROOT)
        assert main(["run", cfg, "--output-dir", str(tmp_path / "o")]) == 3
        assert "[HYPOTHESIS] certificate" in capsys.readouterr().out

    def test_config_error_exits_4(self, tmp_path, capsys):
        cfg = write(tmp_path, "bad.yaml", RING_DEMO + "extra_knob: 3\n")
        assert main(["run", cfg]) == 4
        assert "config error" in capsys.readouterr().out
        assert main(["run", str(tmp_path / "missing.yaml")]) == 4

    def test_numerical_failure_exits_5(self, tmp_path, capsys):
        cfg = write(tmp_path, "shortdelay.yaml", SHORT_DELAY_WINDOW)
        assert main(["run", cfg, "--output-dir", str(tmp_path / "o")]) == 5
        assert "WindowNotCovered" in capsys.readouterr().out

    def test_check_validates_without_running(self, tmp_path, capsys):
        good = write(tmp_path, "good.yaml", RING_DEMO)
        bad = write(tmp_path, "bad.yaml", "nodes: [\n")
        assert main(["check", good]) == 0
        assert "ok (3 nodes, 4 analyses)" in capsys.readouterr().out
        assert main(["check", good, bad]) == 4
        assert not (tmp_path / "good_out").exists()

    def test_batch_returns_worst_exit(self, tmp_path, capsys):
        good = write(tmp_path, "good.yaml", RING_DEMO)
        failing = write(tmp_path, "isolated.yaml", ISOLATED_NODE)
        root = tmp_path / "batch"
        assert main(["batch", good, failing, "--output-dir", str(root)]) == 2
        assert (root / "good" / "trajectory.csv").exists()
        assert (root / "isolated" / "report.txt").exists()
        out = capsys.readouterr().out
        assert f"{good}: exit 0" in out
        assert f"{failing}: exit 2" in out

    def test_default_output_dir_is_config_stem(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        write(tmp_path, "demo.yaml", RING_DEMO)
        assert main(["run", "demo.yaml"]) == 0
        assert (tmp_path / "demo_out" / "trajectory.csv").exists()

    def test_version(self, capsys):
        assert main(["version"]) == 0
        assert "consensus-lab 0.1.0" in capsys.readouterr().out


class TestRunScenarioLibraryEntry:
    def test_delayed_scenario_runs_and_passes(self, tmp_path):
        text = """\
nodes: 2
horizon: 6.0
step: 0.01
delay:
  tau: 0.2
topology:
  kind: constant
  weights: [[0.0, 1.0], [1.0, 0.0]]
initial_state: [1.0, -1.0]
analyses:
  - kind: audit
    functionals: [spread, delayed_spread]
"""
        cfg = parse_config(text)
        assert run_scenario(cfg, str(tmp_path / "d")) == 0
        report = (tmp_path / "d" / "report.txt").read_text()
        assert "delayed_spread" in report and "[PASS] audit" in report

    def test_spectral_uses_time_average_for_switching(self, tmp_path):
        text = """\
nodes: 2
horizon: 4.0
topology:
  kind: alternating_leader_follower
  period: 2.0
initial_state: [1.0, -1.0]
analyses:
  - kind: spectral
    delta: 0.1
"""
        cfg = parse_config(text)
        assert run_scenario(cfg, str(tmp_path / "s")) == 0
        report = (tmp_path / "s" / "report.txt").read_text()
        assert "time-averaged coupling" in report
