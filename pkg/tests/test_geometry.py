import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentryfs.errors import GeometryError
from sentryfs.geometry import (
    GeometryConfig,
    hash_region_blocks,
    layout_for,
    leaf_path,
    min_depth,
    node_location,
)


def config_for(fanout, depth, data_blocks=None, log_blocks=4):
    capacity = fanout**depth
    return GeometryConfig(
        block_size=fanout * 32,
        digest_size=32,
        fanout=fanout,
        depth=depth,
        data_blocks=data_blocks if data_blocks is not None else capacity,
        log_blocks=log_blocks,
    )


def brute_hash_len(fanout, depth):
    # Independent oracle: count nodes level by level.
    total = 0
    nodes = 1
    for _ in range(depth):
        total += nodes
        nodes *= fanout
    return total


class TestLayout:
    def test_small_instance(self):
        layout = layout_for(config_for(8, 2, data_blocks=64, log_blocks=4))
        assert layout.hash_len == 9  # 1 root + 8 level-1
        assert layout.data_start == 14  # 1 superblock + 4 log + 9 hash
        assert layout.total_blocks == 14 + 64

    def test_paper_scale_hash_len(self):
        # Brute loop first, closed form second.
        assert brute_hash_len(128, 4) == 1 + 128 + 16384 + 2097152 == 2113665
        assert hash_region_blocks(128, 4) == brute_hash_len(128, 4)

    def test_single_level_tree(self):
        layout = layout_for(config_for(3, 1, data_blocks=3))
        assert layout.hash_len == 1

    @given(
        fanout=st.sampled_from([2, 3, 4, 8, 16]),
        depth=st.integers(min_value=1, max_value=4),
    )
    def test_hash_len_matches_brute_oracle(self, fanout, depth):
        cfg = config_for(fanout, depth, data_blocks=1)
        assert layout_for(cfg).hash_len == brute_hash_len(fanout, depth)

    def test_rejects_bad_configs(self):
        with pytest.raises(GeometryError):
            GeometryConfig(block_size=100, digest_size=32, fanout=3, depth=2,
                           data_blocks=4, log_blocks=4)  # not divisible
        with pytest.raises(GeometryError):
            config_for(8, 2, data_blocks=65)  # beyond capacity
        with pytest.raises(GeometryError):
            config_for(8, 0)
        with pytest.raises(GeometryError):
            GeometryConfig(block_size=32, digest_size=32, fanout=1, depth=1,
                           data_blocks=1, log_blocks=4)

    @given(
        fanout=st.sampled_from([2, 4, 8]),
        depth=st.integers(min_value=1, max_value=3),
        data=st.data(),
    )
    def test_every_address_in_exactly_one_region(self, fanout, depth, data):
        capacity = fanout**depth
        blocks = data.draw(st.integers(min_value=1, max_value=min(capacity, 64)))
        cfg = config_for(fanout, depth, data_blocks=blocks)
        layout = layout_for(cfg)
        regions = [layout.region_of(a) for a in range(layout.total_blocks)]
        assert regions.count("superblock") == 1
        assert regions.count("log") == layout.log_len
        assert regions.count("hash") == layout.hash_len
        assert regions.count("data") == layout.data_len
        with pytest.raises(GeometryError):
            layout.region_of(layout.total_blocks)


class TestMinDepth:
    def test_terabyte_at_fanout_128_needs_depth_4(self):
        assert min_depth(2**28, 128) == 4

    def test_capacity_one(self):
        assert min_depth(1, 2) == 1
        assert min_depth(1, 128) == 1

    def test_derived_example(self):
        # Brute force: smallest power of 8 reaching 65.
        d = 1
        while 8**d < 65:
            d += 1
        assert d == 3
        assert min_depth(65, 8) == 3

    @given(
        capacity=st.integers(min_value=1, max_value=10**9),
        fanout=st.integers(min_value=2, max_value=200),
    )
    def test_minimality(self, capacity, fanout):
        d = min_depth(capacity, fanout)
        assert fanout**d >= capacity
        assert d == 1 or fanout ** (d - 1) < capacity


class TestNodeLocation:
    def test_root(self):
        cfg = config_for(8, 2)
        layout = layout_for(cfg)
        assert node_location(0, 0, layout, cfg) == layout.hash_start

    def test_level_one(self):
        cfg = config_for(8, 2)
        layout = layout_for(cfg)
        assert node_location(1, 5, layout, cfg) == layout.hash_start + 1 + 5

    def test_breadth_first_enumeration_oracle(self):
        cfg = config_for(8, 3, data_blocks=1)
        layout = layout_for(cfg)
        bfs = [(lvl, i) for lvl in range(3) for i in range(8**lvl)]
        assert bfs.index((2, 17)) == 1 + 8 + 17 == 26
        assert node_location(2, 17, layout, cfg) == layout.hash_start + 26
        for pos, (lvl, i) in enumerate(bfs):
            assert node_location(lvl, i, layout, cfg) == layout.hash_start + pos

    def test_injective_over_valid_pairs(self):
        cfg = config_for(4, 3, data_blocks=1)
        layout = layout_for(cfg)
        seen = set()
        for lvl in range(cfg.depth):
            for i in range(cfg.fanout**lvl):
                addr = node_location(lvl, i, layout, cfg)
                assert addr not in seen
                assert layout.in_hash(addr)
                seen.add(addr)
        assert len(seen) == layout.hash_len

    def test_out_of_range(self):
        cfg = config_for(8, 2)
        layout = layout_for(cfg)
        with pytest.raises(GeometryError):
            node_location(2, 0, layout, cfg)
        with pytest.raises(GeometryError):
            node_location(1, 8, layout, cfg)


def brute_leaf_walk(fanout, depth, data_index):
    """Independent oracle: build the tree of index ranges explicitly and
    descend by range membership, recording child slots."""
    slots = []
    lo, hi = 0, fanout**depth
    for _ in range(depth):
        width = (hi - lo) // fanout
        slot = next(
            s for s in range(fanout)
            if lo + s * width <= data_index < lo + (s + 1) * width
        )
        slots.append(slot)
        lo, hi = lo + slot * width, lo + (slot + 1) * width
    return slots


class TestLeafPath:
    def test_radix_decomposition(self):
        cfg = config_for(8, 2)
        path = leaf_path(10, cfg, layout_for(cfg))
        assert [s.child_slot for s in path.steps] == [1, 2]  # 10 = 1*8 + 2

    def test_leftmost(self):
        for fanout, depth in [(2, 3), (8, 2), (4, 1)]:
            cfg = config_for(fanout, depth, data_blocks=1)
            path = leaf_path(0, cfg, layout_for(cfg))
            assert [s.child_slot for s in path.steps] == [0] * depth

    def test_against_brute_tree_walk(self):
        cfg = config_for(4, 3, data_blocks=1)
        layout = layout_for(cfg)
        assert brute_leaf_walk(4, 3, 37) == [2, 1, 1]  # 37 = 2*16 + 1*4 + 1
        for idx in range(64):
            path = leaf_path(idx, cfg, layout)
            assert [s.child_slot for s in path.steps] == brute_leaf_walk(4, 3, idx)

    def test_out_of_range(self):
        cfg = config_for(8, 2)
        with pytest.raises(GeometryError):
            leaf_path(64, cfg, layout_for(cfg))
        with pytest.raises(GeometryError):
            leaf_path(-1, cfg, layout_for(cfg))

    @given(
        fanout=st.sampled_from([2, 4, 8]),
        depth=st.integers(min_value=1, max_value=3),
        data=st.data(),
    )
    @settings(max_examples=200)
    def test_path_structure(self, fanout, depth, data):
        cfg = config_for(fanout, depth, data_blocks=1)
        layout = layout_for(cfg)
        capacity = fanout**depth
        a = data.draw(st.integers(min_value=0, max_value=capacity - 1))
        b = data.draw(st.integers(min_value=0, max_value=capacity - 1))
        pa, pb = leaf_path(a, cfg, layout), leaf_path(b, cfg, layout)
        assert len(pa.steps) == depth
        assert pa.steps[0].node_block == layout.hash_start
        # depth distinct hash-region blocks
        blocks = [s.node_block for s in pa.steps]
        assert len(set(blocks)) == depth
        assert all(layout.in_hash(x) for x in blocks)
        # shared path prefix iff shared radix-digit prefix
        digits_a = [s.child_slot for s in pa.steps]
        digits_b = [s.child_slot for s in pb.steps]
        for k in range(1, depth):
            same_nodes = blocks[: k + 1] == [s.node_block for s in pb.steps[: k + 1]]
            same_digits = digits_a[:k] == digits_b[:k]
            assert same_nodes == same_digits
