import csv

import pytest

from difd.ablate import (
    PUBLISHED_FULL_SCALE,
    ablate,
    default_matrix,
    inputs_label,
    write_ablation_tables,
)
from difd.dataset import save_pairs
from difd.synthetic import synth_generate
from difd.train import make_run_config


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("abl")
    pairs = synth_generate(3407, 8)
    save_pairs(root, "train", pairs[:6])
    save_pairs(root, "val", pairs[6:])
    return root


def _cfg(run_id, variant="UpConvT", **kw):
    return make_run_config(profile="toy", variant=variant, run_id=run_id,
                           max_epochs=1, **kw)


class TestMatrix:
    def test_default_matrix_covers_published_rows(self, data_dir):
        configs = default_matrix(data_dir=str(data_dir), bands="7B")
        ids = [c.run_id for c in configs]
        assert ids == ["aerial_only", "sat_only", "dual_rgb_rgb", "upconvt",
                       "upnearest", "upbilinear", "upps"]
        labels = {c.run_id: inputs_label(c) for c in configs}
        assert labels["aerial_only"] == "RGB"
        assert labels["sat_only"] == "7B"
        assert labels["dual_rgb_rgb"] == "RGB+RGB"
        assert labels["upconvt"] == "RGB+7B"
        key = ("UpConvT", "satellite", "RGB+7B")
        assert PUBLISHED_FULL_SCALE[key] == (91.5, 84.91)

    def test_single_config_matches_its_run(self, data_dir):
        rows = ablate([_cfg("solo")], data_dir=str(data_dir))
        assert len(rows) == 1
        row = rows[0]
        assert row.status == "ok"
        assert 0.0 <= row.miou <= 1.0
        assert set(row.per_class_iou) == {"background", "buildings", "woodlands",
                                          "water", "roads"}
        assert row.published == (91.5, 84.91)

    def test_rows_independent_of_execution_order(self, data_dir):
        a = _cfg("first", variant="AerialOnly", seed=5)
        b = _cfg("second", variant="SatOnly", seed=6)
        forward = {r.run_id: (r.mf1, r.miou)
                   for r in ablate([a, b], data_dir=str(data_dir))}
        backward = {r.run_id: (r.mf1, r.miou)
                    for r in ablate([b, a], data_dir=str(data_dir))}
        assert forward == backward

    def test_failed_run_recorded_and_table_emitted(self, data_dir, tmp_path):
        good = _cfg("good", variant="SatOnly", seed=2)
        bad = _cfg("bad", variant="SatOnly", seed=2)
        bad.model = bad.model.with_variant("SatOnly", num_classes=4)  # labels reach 4
        rows = ablate([good, bad], data_dir=str(data_dir))
        statuses = {r.run_id: r.status for r in rows}
        assert statuses["good"] == "ok"
        assert statuses["bad"].startswith("failed")
        written = write_ablation_tables(rows, tmp_path)
        assert {p.name for p in written} == {"ablation.csv", "per_class_iou.csv",
                                             "ablation.md"}
        with open(tmp_path / "ablation.csv") as f:
            table = list(csv.DictReader(f))
        assert len(table) == 2
        assert table[1]["miou"] == ""
        assert table[1]["status"].startswith("failed")

    def test_citation_column_content(self, data_dir, tmp_path):
        rows = ablate([_cfg("upconvt")], data_dir=str(data_dir))
        write_ablation_tables(rows, tmp_path)
        with open(tmp_path / "ablation.csv") as f:
            table = list(csv.DictReader(f))
        assert table[0]["published_mf1"] == "91.5"
        assert table[0]["published_miou"] == "84.91"
        md = (tmp_path / "ablation.md").read_text()
        assert "84.91" in md
