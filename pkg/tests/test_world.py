from __future__ import annotations

import numpy as np
import pytest

from cqsim.world import (Action, Flip, Placement, Scene, SceneConfig, Size,
                         apply_action, load_gallery, random_scene)

MANIFEST_HEADER = "id,name,is_person,is_symmetric,expression_count,pose_count\n"


def place(cid, size=Size.MEDIUM, flip=Flip.FACING_LEFT, x=0.5, y=0.5, **kw):
    return Placement(clipart=cid, size=size, flip=flip, x=x, y=y, **kw)


class TestGallery:
    def test_default_manifest_has_58_entries(self, gallery):
        assert len(gallery) == 58

    def test_named_cliparts_present(self, gallery):
        for name in ["tree", "pine tree", "sun", "boy", "girl", "bear", "swing",
                     "slide", "sandbox", "balloons", "pie", "table", "maple tree"]:
            assert name in gallery.names

    def test_person_flags(self, gallery):
        for e in gallery:
            assert e.is_person == (e.expression_count > 0)
            assert e.is_person == (e.pose_count > 0)

    def test_gap_in_ids_rejected(self):
        raw = MANIFEST_HEADER + "0,a,0,0,0,0\n2,b,0,0,0,0\n"
        with pytest.raises(ValueError, match="gap in ids"):
            load_gallery(raw.encode())

    def test_person_without_expressions_rejected(self):
        raw = MANIFEST_HEADER + "0,a,1,0,0,0\n"
        with pytest.raises(ValueError, match="is_person"):
            load_gallery(raw.encode())

    def test_duplicate_name_rejected(self):
        raw = MANIFEST_HEADER + "0,a,0,0,0,0\n1,a,0,0,0,0\n"
        with pytest.raises(ValueError, match="duplicate"):
            load_gallery(raw.encode())


class TestApplyAction:
    def test_insert_into_empty_scene(self, gallery):
        scene = apply_action(Scene(), Action(upserts=(place(2, Size.LARGE, x=0.3, y=0.4),)), gallery)
        assert len(scene) == 1
        assert scene.get(2).size == Size.LARGE

    def test_upsert_replaces_full_placement(self, gallery):
        scene = Scene.of(place(2, Size.LARGE, x=0.3, y=0.4))
        scene2 = apply_action(scene, Action(upserts=(place(2, Size.SMALL, x=0.9, y=0.9),)), gallery)
        assert scene2.get(2).size == Size.SMALL
        assert scene2.get(2).x == 0.9
        # input untouched (value semantics)
        assert scene.get(2).size == Size.LARGE

    def test_removing_absent_id_is_noop(self, gallery):
        scene = Scene.of(place(2))
        scene2 = apply_action(scene, Action(removals=(5,)), gallery)
        assert scene2.ids() == {2}

    def test_idempotent_upsert(self, gallery):
        action = Action(upserts=(place(3, Size.SMALL, x=0.1, y=0.2),))
        once = apply_action(Scene(), action, gallery)
        twice = apply_action(once, action, gallery)
        assert once.placements == twice.placements

    def test_upsert_then_remove_restores_id_set(self, gallery):
        scene = Scene.of(place(2), place(5))
        added = apply_action(scene, Action(upserts=(place(7),)), gallery)
        removed = apply_action(added, Action(removals=(7,)), gallery)
        assert removed.ids() == scene.ids()

    def test_out_of_range_id_rejected(self, gallery):
        with pytest.raises(ValueError, match="out of gallery range"):
            apply_action(Scene(), Action(upserts=(place(58),)), gallery)

    def test_person_attrs_on_non_person_rejected(self, gallery):
        bad = place(2, expression=0, pose=0)
        with pytest.raises(ValueError, match="person attributes"):
            apply_action(Scene(), Action(upserts=(bad,)), gallery)

    def test_overlapping_upsert_and_removal_rejected(self):
        with pytest.raises(ValueError, match="both"):
            Action(upserts=(place(2),), removals=(2,))


class TestRandomScene:
    def test_same_seed_identical(self, gallery):
        assert random_scene(7, gallery).placements == random_scene(7, gallery).placements

    def test_forced_bounds(self, gallery):
        cfg = SceneConfig(min_cliparts=6, max_cliparts=6)
        counts = {len(random_scene(s, gallery, cfg)) for s in range(500)}
        assert counts == {6}

    def test_mean_count_is_six(self, gallery):
        # default bounds are uniform on [4, 8]; Monte-Carlo mean should sit at 6
        counts = [len(random_scene(s, gallery)) for s in range(10000)]
        assert abs(np.mean(counts) - 6.0) <= 0.1

    def test_invalid_bounds_rejected(self, gallery):
        with pytest.raises(ValueError, match="bounds"):
            random_scene(0, gallery, SceneConfig(min_cliparts=5, max_cliparts=4))

    def test_all_placements_valid_over_1e5_scenes(self, gallery):
        for s in range(100000):
            scene = random_scene(s, gallery)
            for p in scene.placements.values():
                p.validate(gallery)


class TestSerialization:
    def test_scene_roundtrip(self, gallery):
        scene = random_scene(3, gallery)
        assert Scene.from_dict(scene.to_dict()).placements == scene.placements

    def test_person_placement_roundtrip(self, gallery):
        p = place(0, expression=2, pose=4)
        assert Placement.from_dict(p.to_dict()) == p
