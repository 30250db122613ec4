import json

import pytest

from orbitexport.convert import ConversionError, convert_ground_truth, main


def touch(path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"")


class TestHolidays:
    def build_raw(self, tmp_path, n_groups=3):
        raw = tmp_path / "holidays"
        for g in range(n_groups):
            for i in range(2 + g % 2):
                touch(raw / f"{100000 + g * 100 + i}.jpg")
        return raw

    def test_groups_and_roles(self, tmp_path):
        raw = self.build_raw(tmp_path)
        with pytest.warns(UserWarning, match="expected 500 queries"):
            manifest = convert_ground_truth("holidays", raw)
        assert manifest["protocol"] == "standard"
        roles = {img["id"]: img["role"] for img in manifest["images"]}
        assert roles["100000"] == "query"
        assert roles["100001"] == "database"
        assert manifest["ground_truth"]["100000"]["relevant"] == ["100001"]
        assert manifest["ground_truth"]["100100"]["relevant"] == ["100101", "100102"]

    def test_queries_not_in_database(self, tmp_path):
        raw = self.build_raw(tmp_path)
        with pytest.warns(UserWarning):
            manifest = convert_ground_truth("holidays", raw)
        db = {img["id"] for img in manifest["images"] if img["role"] != "query"}
        assert "100000" not in db

    def test_empty_dir_errors(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(ConversionError, match="no JPEG"):
            convert_ground_truth("holidays", tmp_path / "empty")


class TestOxbuild:
    def build_raw(self, tmp_path):
        raw = tmp_path / "oxbuild"
        for stem in ("all_souls_000001", "all_souls_000002", "bodleian_000003", "keble_000004"):
            touch(raw / "images" / f"{stem}.jpg")
        gt = raw / "gt"
        gt.mkdir(parents=True)
        (gt / "all_souls_1_query.txt").write_text("oxc1_all_souls_000001 10 10 50 50\n")
        (gt / "all_souls_1_good.txt").write_text("all_souls_000002\n")
        (gt / "all_souls_1_ok.txt").write_text("bodleian_000003\n")
        (gt / "all_souls_1_junk.txt").write_text("keble_000004\n")
        return raw

    def test_good_and_ok_are_relevant(self, tmp_path):
        with pytest.warns(UserWarning, match="expected 55 queries"):
            manifest = convert_ground_truth("oxbuild", self.build_raw(tmp_path))
        qid = "all_souls_1#all_souls_000001"
        truth = manifest["ground_truth"][qid]
        assert truth["relevant"] == ["all_souls_000002", "bodleian_000003"]
        assert truth["junk"] == ["keble_000004"]
        roles = {img["id"]: img["role"] for img in manifest["images"]}
        assert roles[qid] == "query"
        assert roles["all_souls_000001"] == "both"

    def test_unknown_query_image_errors(self, tmp_path):
        raw = self.build_raw(tmp_path)
        (raw / "gt" / "magd_1_query.txt").write_text("oxc1_missing 0 0 1 1\n")
        with pytest.raises(ConversionError, match="unknown image"):
            convert_ground_truth("oxbuild", raw)


class TestUKB:
    def build_raw(self, tmp_path, n_groups=2):
        raw = tmp_path / "ukb"
        for n in range(n_groups * 4):
            touch(raw / f"ukbench{n:05d}.jpg")
        return raw

    def test_every_image_queries_its_group(self, tmp_path):
        with pytest.warns(UserWarning, match="expected 10200 queries"):
            manifest = convert_ground_truth("ukb", self.build_raw(tmp_path))
        assert manifest["protocol"] == "ukb"
        truth = manifest["ground_truth"]
        assert len(truth) == 8
        assert truth["ukbench00000"]["relevant"] == [
            "ukbench00000", "ukbench00001", "ukbench00002", "ukbench00003",
        ]
        assert truth["ukbench00005"]["relevant"] == truth["ukbench00004"]["relevant"]
        assert all(img["role"] == "both" for img in manifest["images"])

    def test_incomplete_group_errors(self, tmp_path):
        raw = self.build_raw(tmp_path)
        touch(raw / "ukbench00008.jpg")
        with pytest.raises(ConversionError, match="exactly 4"):
            convert_ground_truth("ukb", raw)


class TestGraphics:
    def build_raw(self, tmp_path):
        raw = tmp_path / "graphics"
        for i in range(3):
            touch(raw / "database" / f"ref{i}.jpg")
        for i in range(2):
            touch(raw / "queries" / f"q{i}.jpg")
        (raw / "ground_truth.txt").write_text(
            "q0.jpg ref0.jpg ref1.jpg\nq1.jpg ref2.jpg ref0.jpg\n"
        )
        return raw

    def test_two_relevant_per_query(self, tmp_path):
        with pytest.warns(UserWarning, match="expected 1500 queries"):
            manifest = convert_ground_truth("graphics", self.build_raw(tmp_path))
        assert manifest["ground_truth"]["q0"]["relevant"] == ["ref0", "ref1"]
        assert manifest["ground_truth"]["q1"]["relevant"] == ["ref0", "ref2"]
        paths = {img["id"]: img["path"] for img in manifest["images"]}
        assert paths["q0"] == "queries/q0.jpg"
        assert paths["ref0"] == "database/ref0.jpg"

    def test_unknown_reference_errors(self, tmp_path):
        raw = self.build_raw(tmp_path)
        (raw / "ground_truth.txt").write_text("q0.jpg nosuch.jpg\n")
        with pytest.raises(ConversionError, match="unknown"):
            convert_ground_truth("graphics", raw)


class TestManifestsLoadInConsumer:
    """Converted manifests must satisfy the retrieval pipeline's schema."""

    @pytest.mark.parametrize("dataset", ["holidays", "oxbuild", "ukb", "graphics"])
    def test_round_trip_through_consumer(self, tmp_path, dataset):
        from orbitpool.retrieval import manifest_from_dict

        builders = {
            "holidays": TestHolidays().build_raw,
            "oxbuild": TestOxbuild().build_raw,
            "ukb": TestUKB().build_raw,
            "graphics": TestGraphics().build_raw,
        }
        with pytest.warns(UserWarning):
            doc = convert_ground_truth(dataset, builders[dataset](tmp_path))
        manifest = manifest_from_dict(doc)
        assert manifest.query_ids()


class TestCli:
    def test_writes_manifest(self, tmp_path):
        raw = TestUKB().build_raw(tmp_path)
        out = tmp_path / "m.json"
        with pytest.warns(UserWarning):
            assert main(["--dataset", "ukb", "--raw", str(raw), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["protocol"] == "ukb"

    def test_bad_raw_is_error(self, tmp_path):
        out = tmp_path / "m.json"
        code = main(["--dataset", "holidays", "--raw", str(tmp_path), "--out", str(out)])
        assert code == 1
        assert not out.exists()
