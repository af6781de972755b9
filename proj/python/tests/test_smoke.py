import numpy as np
import pytest

import fsample


def test_from_edges_builds_destination_indexed_graph():
    g = fsample.from_edges(3, src=[1, 2, 0], dst=[0, 0, 2])
    assert g.num_nodes == 3
    assert g.nnz == 3
    assert list(g.row_ptr) == [0, 2, 2, 3]
    assert sorted(g.in_neighbors(0)) == [1, 2]
    src, dst = g.to_coo()
    assert fsample.from_edges(3, src, dst) == g


def test_invalid_input_raises_library_errors():
    with pytest.raises(fsample.ParameterError):
        fsample.generate_erdos_renyi(3, 10)
    with pytest.raises(fsample.Error):
        fsample.from_edges(2, [0], [5])
    with pytest.raises(fsample.ContractViolation):
        fsample.sample_level(fsample.generate_erdos_renyi(10, 20), [1, 1], fanout=2)


def test_generators_are_deterministic(tmp_path):
    a = fsample.generate_rmat(8, 16, seed=3)
    b = fsample.generate_rmat(8, 16, seed=3)
    assert a == b
    assert a.num_nodes == 256 and a.nnz == 4096
    path = str(tmp_path / "g.bin")
    a.save(path, index_width=4)
    assert fsample.load_graph(path) == a


def test_kernels_agree_and_respect_fanout():
    g = fsample.generate_erdos_renyi(200, 3000, seed=5)
    seeds = np.arange(0, 200, 7, dtype=np.uint64)
    fused = fsample.sample_level(g, seeds, fanout=4, seed=9, kernel="fused")
    two_step = fsample.sample_level(g, seeds, fanout=4, seed=9, kernel="two-step")
    for key in ("dst_globals", "src_globals", "row_ptr", "col_idx"):
        np.testing.assert_array_equal(fused[key], two_step[key])
    degrees = np.diff(fused["row_ptr"])
    for v, d in zip(seeds, degrees):
        assert d == min(4, g.in_degree(int(v)))


def test_minibatch_levels_chain():
    g = fsample.generate_rmat(10, 8, seed=1)
    mb = fsample.sample_minibatch(g, np.arange(32), fanouts=[5, 3, 2], seed=4)
    blocks = mb["blocks"]
    assert len(blocks) == 3
    for upper, lower in zip(blocks, blocks[1:]):
        np.testing.assert_array_equal(upper["src_globals"], lower["dst_globals"])
    np.testing.assert_array_equal(blocks[-1]["src_globals"], mb["input_nodes"])
    threaded = fsample.sample_minibatch(g, np.arange(32), fanouts=[5, 3, 2], seed=4, threads=3)
    np.testing.assert_array_equal(threaded["input_nodes"], mb["input_nodes"])


def test_partition_and_storage_report():
    g = fsample.generate_erdos_renyi(100, 600, seed=2)
    assignment, cut = fsample.partition(g, 4, method="greedy", labels=np.arange(0, 100, 3))
    assert assignment.shape == (100,)
    assert set(assignment.tolist()) <= {0, 1, 2, 3}
    assert 0 <= cut <= g.nnz
    report = fsample.storage_report(111_000_000, 3_200_000_000, 128)
    assert report["topology_bytes"] == (111_000_000 + 1 + 3_200_000_000) * 4
    assert report["feature_bytes"] == 111_000_000 * 128 * 4
    assert abs(report["topology_fraction"] - 0.19) < 0.005


def test_verification_suites_report_no_failures():
    assert fsample.verify_kernels(trials=20)["failures"] == []
    assert fsample.verify_formats(instances=10)["failures"] == []
    sampling = fsample.verify_sampling(graphs=5, inclusion_trials=5000)
    assert sampling["failures"] == []
    assert sampling["expected_inclusion"] == 0.5


@pytest.mark.parametrize("mode,rounds", [("full", 6), ("hybrid", 2)])
def test_epoch_round_counts(mode, rounds):
    g = fsample.generate_erdos_renyi(400, 4000, seed=8)
    metrics = fsample.run_epoch(g, workers=2, fanouts=[4, 3, 2], batch_size=16, mode=mode)
    assert len(metrics) == 2
    for m in metrics:
        assert m["minibatches"] > 0
        assert set(m["rounds_per_minibatch"]) == {rounds}
