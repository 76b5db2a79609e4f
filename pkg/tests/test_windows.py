import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from soctriage.exceptions import EmptyWindow
from soctriage.oracle import example_window
from soctriage.windows import (Window, WindowFeaturizer, aggregate_numeric, build_metadata, build_state,
                               build_vocab, partition_windows)

from conftest import flow

MIN = 60_000
FIVE = 5 * MIN


def test_partition_minutes():
    ws = partition_windows([flow(int(0.5 * MIN)), flow(3 * MIN), flow(6 * MIN)], FIVE)
    assert [len(w) for w in ws] == [2, 1]
    assert ws[0].start_ms == 0 and ws[1].start_ms == FIVE


def test_partition_one_minute():
    ws = partition_windows([flow(i * 1000) for i in range(60)], FIVE)
    assert len(ws) == 1


def test_partition_matches_bucket_enumeration():
    recs = [flow(i * MIN) for i in range(12)]
    ws = partition_windows(recs, FIVE)
    buckets = {}
    for r in recs:
        buckets.setdefault(r.timestamp // FIVE, []).append(r)
    assert [len(w) for w in ws] == [len(b) for _, b in sorted(buckets.items())] == [5, 5, 2]


def test_partition_skips_empty_and_keeps_bounds():
    recs = [flow(0), flow(20 * MIN), flow(21 * MIN)]
    ws = partition_windows(recs, FIVE)
    assert [w.index for w in ws] == [0, 1]
    for w in ws:
        assert all(w.start_ms <= f.timestamp < w.end_ms for f in w.flows)


def test_aggregate_worked_example():
    assert aggregate_numeric(example_window()).tolist() == [232.5, 443, 52345.5, 52347, 4875, 11000]


def test_aggregate_single_flow():
    w = Window(0, 0, FIVE, [flow(1, sport=10, dport=20, bin_=30, bout=40)])
    assert aggregate_numeric(w).tolist() == [10, 10, 20, 20, 30, 40]


def test_bytes_out_max():
    w = Window(0, 0, FIVE, [flow(1, bout=300), flow(2, bout=11000)])
    assert aggregate_numeric(w)[5] == 11000


def test_vocab_top_k():
    fl = [flow(i, src="A") for i in range(10)] + [flow(100 + i, src="B") for i in range(5)] + [flow(200, src="C")]
    v = build_vocab([Window(0, 0, FIVE, fl)], k=2)
    assert v.src_ip == ("A", "B", "OTHER")


def test_vocab_tie_break():
    fl = [flow(i, src="B") for i in range(5)] + [flow(100 + i, src="A") for i in range(5)]
    assert build_vocab([Window(0, 0, FIVE, fl)], k=1).src_ip == ("A", "OTHER")


def test_vocab_no_padding():
    fl = [flow(1, proto="TCP"), flow(2, proto="UDP")]
    assert build_vocab([Window(0, 0, FIVE, fl)], k=8).protocol == ("TCP", "UDP", "OTHER")


def test_state_counts_and_other():
    train = Window(0, 0, FIVE, [flow(1, proto="TCP"), flow(2, proto="UDP")])
    v = build_vocab([train], k=8)
    w = Window(1, FIVE, 2 * FIVE, [flow(FIVE + i, proto="UDP", src="9.9.9.9") for i in range(4)])
    s = build_state(w, v)
    n_src = len(v.src_ip)
    n_dst = len(v.dest_ip)
    assert s.categorical[n_src + n_dst:].tolist() == [0, 4, 0]
    assert s.categorical[n_src - 1] == 4  # unseen source goes to OTHER
    assert s.dim == 6 + v.size


def test_state_numeric_worked_example():
    w = example_window()
    s = build_state(w, build_vocab([w]))
    assert s.numeric.tolist() == [232.5, 443, 52345.5, 52347, 4875, 11000]


def test_metadata_mode_and_tie():
    w = Window(0, 0, FIVE, [flow(1, src="X"), flow(2, src="X"), flow(3, src="Y")])
    assert build_metadata(w).src_ip == "X"
    w = Window(0, 0, FIVE, [flow(1, src="X"), flow(2, src="Y")])
    assert build_metadata(w).src_ip == "X"


def test_metadata_worked_example():
    w = example_window()
    meta = build_metadata(w)
    assert meta.flow_count == len(w.flows) == 4
    assert meta.distinct_dest_count == len({f.dest_ip for f in w.flows}) == 1


def test_metadata_empty_window():
    import pytest
    with pytest.raises(EmptyWindow):
        build_metadata(Window(0, 0, FIVE, []))


def test_window_label_is_or():
    assert Window(0, 0, FIVE, [flow(1, label=0), flow(2, label=1)]).label == 1
    assert Window(0, 0, FIVE, [flow(1, label=0), flow(2, label=0)]).label == 0


def test_featurizer_fixed_width():
    ws = partition_windows([flow(i * MIN, src=f"10.0.0.{i % 7}", label=i % 2) for i in range(40)], FIVE)
    fz = WindowFeaturizer(k=3).fit(ws[:3])
    X = fz.transform(ws)
    assert X.shape == (len(ws), 6 + fz.vocab_.size)
    assert len(fz.get_feature_names_out()) == X.shape[1]


flows_st = st.lists(
    st.builds(lambda i, sp, dp, b, o, s, p: flow(i, sport=sp, dport=dp, bin_=b, bout=o, src=s, proto=p),
              st.integers(0, 10_000), st.integers(0, 65535), st.integers(0, 65535),
              st.integers(0, 10**6), st.integers(0, 10**6), st.sampled_from(["a", "b", "c"]),
              st.sampled_from(["TCP", "UDP"])),
    min_size=1, max_size=20,
)


@settings(max_examples=100, deadline=None)
@given(flows_st, st.randoms(use_true_random=False))
def test_state_permutation_invariant(fl, rnd):
    v = build_vocab([Window(0, 0, FIVE, fl)], k=2)
    shuffled = list(fl)
    rnd.shuffle(shuffled)
    a = build_state(Window(0, 0, FIVE, fl), v).vector
    b = build_state(Window(0, 0, FIVE, shuffled), v).vector
    assert np.allclose(a, b, rtol=1e-12, atol=0)
    x = a[:6]
    assert x[0] <= x[1] and x[2] <= x[3]
    cat = build_state(Window(0, 0, FIVE, fl), v).categorical
    sizes = [len(v.src_ip), len(v.dest_ip), len(v.protocol)]
    bounds = np.cumsum([0] + sizes)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        assert cat[lo:hi].sum() == len(fl)
