import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blockscramble import (
    BlockGeometry,
    GeometryError,
    RasterImage,
    assemble_blocks,
    block_count,
    split_into_blocks,
)


def random_image(w, h, c=3, seed=0):
    rng = np.random.default_rng(seed)
    return RasterImage(rng.integers(0, 256, (h, w, c), dtype=np.uint8))


class TestBlockCount:
    def test_mit_dataset_16(self):
        assert block_count(672, 480, 16, 16) == 1260

    def test_composite_8(self):
        assert block_count(672, 1440, 8, 8) == 15120

    def test_single_block(self):
        assert block_count(8, 8, 8, 8) == 1

    def test_floor_discards_remainder(self):
        assert block_count(15, 15, 8, 8) == 1

    def test_twelvefold_ratio(self):
        assert block_count(672, 480, 16, 16) * 12 == block_count(672, 1440, 8, 8)

    @pytest.mark.parametrize("args", [
        (0, 480, 16, 16), (672, 0, 16, 16), (672, 480, 0, 16), (672, 480, 16, 0),
        (-4, 480, 16, 16),
    ])
    def test_invalid_geometry(self, args):
        with pytest.raises(GeometryError):
            block_count(*args)

    @given(w=st.integers(1, 200), h=st.integers(1, 200),
           bw=st.integers(1, 64), bh=st.integers(1, 64))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_block_size(self, w, h, bw, bh):
        assert block_count(w, h, bw, bh) >= block_count(w, h, bw + 1, bh)
        assert block_count(w, h, bw, bh) >= block_count(w, h, bw, bh + 1)


class TestRasterImage:
    def test_samples_are_row_major_interleaved(self):
        img = random_image(5, 4)
        assert img.samples.shape == (5 * 4 * 3,)
        assert img.samples[0:3].tolist() == img.pixels[0, 0].tolist()
        assert img.samples[3:6].tolist() == img.pixels[0, 1].tolist()

    def test_grayscale_from_2d(self):
        img = RasterImage(np.zeros((4, 6), dtype=np.uint8))
        assert (img.width, img.height, img.channels, img.bit_depth) == (6, 4, 1, 8)

    def test_rejects_bad_dtype(self):
        with pytest.raises(GeometryError):
            RasterImage(np.zeros((4, 4, 3), dtype=np.uint16))

    def test_rejects_bad_channels(self):
        with pytest.raises(GeometryError):
            RasterImage(np.zeros((4, 4, 2), dtype=np.uint8))

    def test_pixels_frozen(self):
        img = random_image(4, 4)
        with pytest.raises(ValueError):
            img.pixels[0, 0, 0] = 1

    def test_value_equality(self):
        a, b = random_image(4, 4, seed=1), random_image(4, 4, seed=1)
        assert a == b and a != random_image(4, 4, seed=2)


class TestSplitAssemble:
    def test_quadrants(self):
        img = random_image(16, 16)
        geom = BlockGeometry.for_image(16, 16, 8, 8)
        blocks = split_into_blocks(img, geom)
        assert blocks.shape == (4, 8, 8, 3)
        assert np.array_equal(blocks[0], img.pixels[0:8, 0:8])
        assert np.array_equal(blocks[1], img.pixels[0:8, 8:16])
        assert np.array_equal(blocks[2], img.pixels[8:16, 0:8])

    def test_single_block_equals_image(self):
        img = random_image(8, 8)
        geom = BlockGeometry.for_image(8, 8, 8, 8)
        blocks = split_into_blocks(img, geom)
        assert blocks.shape[0] == 1
        assert np.array_equal(blocks[0], img.pixels)
        assert assemble_blocks(blocks, geom) == img

    def test_round_trip_24x16(self):
        img = random_image(24, 16, seed=3)
        geom = BlockGeometry.for_image(24, 16, 8, 8)
        assert assemble_blocks(split_into_blocks(img, geom), geom) == img

    def test_non_divisible_rejected(self):
        with pytest.raises(GeometryError):
            BlockGeometry.for_image(15, 16, 8, 8)
        img = random_image(24, 16)
        with pytest.raises(GeometryError):
            split_into_blocks(img, BlockGeometry(8, 8, 2, 2))

    def test_assemble_count_mismatch(self):
        geom = BlockGeometry.for_image(16, 16, 8, 8)
        with pytest.raises(GeometryError):
            assemble_blocks(np.zeros((3, 8, 8, 3), dtype=np.uint8), geom)
        with pytest.raises(GeometryError):
            assemble_blocks(np.zeros((4, 4, 8, 3), dtype=np.uint8), geom)

    def test_permute_then_invert_restores(self):
        img = random_image(32, 24, seed=5)
        geom = BlockGeometry.for_image(32, 24, 8, 8)
        blocks = split_into_blocks(img, geom)
        rng = np.random.default_rng(0)
        perm = rng.permutation(geom.n)
        shuffled = blocks[perm]
        restored = np.empty_like(shuffled)
        restored[perm] = shuffled
        assert assemble_blocks(restored, geom) == img

    @given(cols=st.integers(1, 6), rows=st.integers(1, 6),
           bw=st.integers(1, 12), bh=st.integers(1, 12),
           c=st.sampled_from([1, 3]), seed=st.integers(0, 2**31))
    @settings(max_examples=40, deadline=None)
    def test_split_assemble_identity(self, cols, rows, bw, bh, c, seed):
        img = random_image(cols * bw, rows * bh, c=c, seed=seed)
        geom = BlockGeometry.for_image(img.width, img.height, bw, bh)
        assert assemble_blocks(split_into_blocks(img, geom), geom) == img
