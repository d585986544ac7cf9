import numpy as np
import pytest

from tinyalign.layout import PART_NAMES, get_layout, synth65_template


@pytest.mark.parametrize("name,count", [("synth65", 65), ("ibug68", 68)])
class TestLayouts:
    def test_point_count(self, name, count):
        assert get_layout(name).num_points == count

    def test_flip_is_involution(self, name, count):
        remap = get_layout(name).flip_remap
        for i in range(count):
            assert remap[remap[i]] == i

    def test_flip_preserves_tags(self, name, count):
        layout = get_layout(name)
        for i, j in enumerate(layout.flip_remap):
            assert layout.tags[i] == layout.tags[j]

    def test_flip_swaps_eyes(self, name, count):
        layout = get_layout(name)
        mapped = {layout.flip_remap[i] for i in layout.left_eye}
        assert mapped == set(layout.right_eye)

    def test_parts_present(self, name, count):
        layout = get_layout(name)
        assert set(layout.parts) == set(PART_NAMES)
        for loop in layout.parts.values():
            assert len(loop) >= 3


class TestSynth65:
    def test_subset_sizes(self):
        layout = get_layout("synth65")
        assert len(layout.subset_indices("inner")) == 62
        assert len(layout.subset_indices("contour")) == 3
        assert len(layout.subset_indices("all")) == 65

    def test_template_flip_symmetric(self):
        template = synth65_template()
        layout = get_layout("synth65")
        mirrored = template.copy()
        mirrored[:, 0] = 1.0 - mirrored[:, 0]
        remapped = template[list(layout.flip_remap)]
        np.testing.assert_allclose(remapped, mirrored, atol=1e-9)

    def test_pupils_at_eye_centers(self):
        layout = get_layout("synth65")
        left, right = layout.pupils(synth65_template())
        np.testing.assert_allclose(left, [0.335, 0.42], atol=1e-9)
        np.testing.assert_allclose(right, [0.665, 0.42], atol=1e-9)

    def test_unknown_layout_rejected(self):
        with pytest.raises(KeyError):
            get_layout("nope")
