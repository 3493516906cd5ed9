import json
import struct

import numpy as np
import pytest

from permstab import bundle_io
from permstab.bundle_io import (
    dumps_canonical,
    format_float,
    partition_to_doc,
    preference_from_line,
    preference_to_line,
    read_bundle,
    read_partition,
    read_representatives,
    representatives_to_doc,
    write_bundle,
    write_partition,
    write_preferences,
    write_representatives,
)
from permstab.cli import main
from permstab.errors import (
    BadMagic,
    BundleInvalid,
    CorruptPayload,
    InvalidPermutation,
    IoFailure,
    NonFiniteState,
    UnsupportedVersion,
)
from permstab.modes import cluster_permutations, representatives
from permstab.prefs import build_preferences_for_bundle
from permstab.synth import SynthSpec, generate


@pytest.fixture
def labeled():
    return generate(SynthSpec(true_modes=3, dim=16, n_states=24, noise_std=0.05, seed=11))


def write_raw(tmp_path, blob, manifest=None, name="bundle.hsb"):
    path = tmp_path / name
    path.write_bytes(blob)
    if manifest is not None:
        (tmp_path / (name + ".json")).write_text(json.dumps(manifest))
    return str(path)


def valid_parts(bundle):
    n, d = bundle.states.shape
    n_docs = bundle.n_documents
    header = struct.pack("<4sIIII", b"HSB1", 1, n, d, n_docs)
    perms = np.ascontiguousarray(bundle.permutations, dtype=np.uint8).tobytes()
    states = np.ascontiguousarray(bundle.states, dtype="<f4").tobytes()
    manifest = {
        "answers": bundle.answers,
        "documents": bundle.documents,
        "gold_answers": bundle.gold_answers,
        "layer_index": bundle.layer_index,
        "model_id": bundle.model_id,
        "query": bundle.query,
        "query_id": bundle.query_id,
        "temperature": bundle.temperature,
    }
    return header, perms, states, manifest


class TestCanonicalJson:
    def test_float_formatting_roundtrip(self):
        for value in (0.1, 1.0, -3.5e-12, 2.0 / 3.0, 1e300, 123456.789):
            assert float(format_float(value)) == value
        assert format_float(1.0) == "1.0"

    def test_sorted_keys(self):
        text = dumps_canonical({"b": 1, "a": [1.5, None, True]})
        assert text == '{"a": [1.5, null, true], "b": 1}'


class TestBundleRoundTrip:
    def test_field_for_field(self, tmp_path, labeled):
        path = str(tmp_path / "b.hsb")
        write_bundle(labeled.bundle, path)
        back = read_bundle(path)
        assert back.query_id == labeled.bundle.query_id
        assert back.query == labeled.bundle.query
        assert back.documents == labeled.bundle.documents
        assert back.gold_answers == labeled.bundle.gold_answers
        assert back.answers == labeled.bundle.answers
        assert back.model_id == labeled.bundle.model_id
        assert back.layer_index == labeled.bundle.layer_index
        assert back.temperature == labeled.bundle.temperature
        assert np.array_equal(back.permutations, labeled.bundle.permutations)
        assert back.states.tobytes() == labeled.bundle.states.tobytes()

    def test_file_size_formula(self, tmp_path, labeled):
        path = tmp_path / "b.hsb"
        write_bundle(labeled.bundle, str(path))
        n, d = labeled.bundle.states.shape
        n_docs = labeled.bundle.n_documents
        assert path.stat().st_size == 20 + n * n_docs + 4 * n * d

    def test_byte_identical_rewrites(self, tmp_path, labeled):
        p1, p2 = str(tmp_path / "a.hsb"), str(tmp_path / "b.hsb")
        write_bundle(labeled.bundle, p1)
        write_bundle(labeled.bundle, p2)
        assert (tmp_path / "a.hsb").read_bytes() == (tmp_path / "b.hsb").read_bytes()
        assert (tmp_path / "a.hsb.json").read_bytes() == (tmp_path / "b.hsb.json").read_bytes()

    def test_empty_bundle_rejected(self, tmp_path, labeled):
        bundle = labeled.bundle
        bundle.states = np.zeros((0, 4), dtype=np.float32)
        bundle.permutations = np.zeros((0, 3), dtype=np.uint8)
        bundle.answers = []
        with pytest.raises(BundleInvalid):
            write_bundle(bundle, str(tmp_path / "x.hsb"))


class TestMalformedFixtures:
    def test_bad_magic(self, tmp_path, labeled):
        header, perms, states, manifest = valid_parts(labeled.bundle)
        path = write_raw(tmp_path, b"XXXX" + header[4:] + perms + states, manifest)
        with pytest.raises(BadMagic):
            read_bundle(path)

    def test_unsupported_version(self, tmp_path, labeled):
        _, perms, states, manifest = valid_parts(labeled.bundle)
        n, d = labeled.bundle.states.shape
        header = struct.pack("<4sIIII", b"HSB1", 9, n, d, labeled.bundle.n_documents)
        path = write_raw(tmp_path, header + perms + states, manifest)
        with pytest.raises(UnsupportedVersion):
            read_bundle(path)

    def test_truncated_payload(self, tmp_path, labeled):
        header, perms, states, manifest = valid_parts(labeled.bundle)
        path = write_raw(tmp_path, header + perms + states[:-7], manifest)
        with pytest.raises(CorruptPayload):
            read_bundle(path)

    def test_trailing_bytes(self, tmp_path, labeled):
        header, perms, states, manifest = valid_parts(labeled.bundle)
        path = write_raw(tmp_path, header + perms + states + b"\x00", manifest)
        with pytest.raises(CorruptPayload):
            read_bundle(path)

    def test_invalid_permutation_row(self, tmp_path, labeled):
        header, perms, states, manifest = valid_parts(labeled.bundle)
        bad = bytearray(perms)
        bad[1] = bad[0]  # row 0 repeats an index
        path = write_raw(tmp_path, header + bytes(bad) + states, manifest)
        with pytest.raises(InvalidPermutation):
            read_bundle(path)

    def test_duplicate_permutation_rows(self, tmp_path, labeled):
        header, perms, states, manifest = valid_parts(labeled.bundle)
        n_docs = labeled.bundle.n_documents
        bad = bytearray(perms)
        bad[n_docs : 2 * n_docs] = bad[:n_docs]
        path = write_raw(tmp_path, header + bytes(bad) + states, manifest)
        with pytest.raises(InvalidPermutation):
            read_bundle(path)

    def test_non_finite_state(self, tmp_path, labeled):
        header, perms, states, manifest = valid_parts(labeled.bundle)
        arr = np.frombuffer(states, dtype="<f4").copy()
        arr[3] = np.nan
        path = write_raw(tmp_path, header + perms + arr.tobytes(), manifest)
        with pytest.raises(NonFiniteState):
            read_bundle(path)

    def test_manifest_not_json(self, tmp_path, labeled):
        header, perms, states, _ = valid_parts(labeled.bundle)
        path = write_raw(tmp_path, header + perms + states)
        (tmp_path / "bundle.hsb.json").write_text("{nope")
        with pytest.raises(CorruptPayload):
            read_bundle(path)

    def test_manifest_missing_field(self, tmp_path, labeled):
        header, perms, states, manifest = valid_parts(labeled.bundle)
        del manifest["query"]
        path = write_raw(tmp_path, header, manifest)  # body length wrong too
        (tmp_path / "bundle.hsb").write_bytes(header + perms + states)
        with pytest.raises(CorruptPayload):
            read_bundle(path)

    def test_missing_file_is_io_failure(self, tmp_path):
        with pytest.raises(IoFailure):
            read_bundle(str(tmp_path / "absent.hsb"))


class TestDocumentRoundTrips:
    def test_partition(self, tmp_path, labeled):
        part = cluster_permutations(labeled.bundle, seed=1)
        path = str(tmp_path / "part.json")
        write_partition(part, labeled.bundle.query_id, path)
        query_id, back = read_partition(path)
        assert query_id == labeled.bundle.query_id
        assert back.k == part.k
        assert back.sigma_used == part.sigma_used
        assert np.array_equal(back.eigenvalues, part.eigenvalues)
        assert np.array_equal(back.embedding, part.embedding)
        assert np.array_equal(back.assignment.labels, part.assignment.labels)
        assert np.array_equal(back.cluster_sizes, part.cluster_sizes)
        # emit(parse(emit(x))) == emit(x)
        again = dumps_canonical(partition_to_doc(back, query_id))
        assert again == dumps_canonical(partition_to_doc(part, labeled.bundle.query_id))

    def test_representatives(self, tmp_path, labeled):
        part = cluster_permutations(labeled.bundle, seed=1)
        reps = representatives(part, labeled.bundle)
        path = str(tmp_path / "reps.json")
        write_representatives(reps, labeled.bundle.query_id, path)
        query_id, back = read_representatives(path)
        assert query_id == labeled.bundle.query_id
        assert len(back.clusters) == len(reps.clusters)
        for mine, theirs in zip(reps.clusters, back.clusters):
            assert mine.representative_index == theirs.representative_index
            assert mine.representative_answer == theirs.representative_answer
            assert mine.size == theirs.size
            assert np.array_equal(mine.centroid, theirs.centroid)
        assert dumps_canonical(representatives_to_doc(back, query_id)) == dumps_canonical(
            representatives_to_doc(reps, labeled.bundle.query_id)
        )

    def test_preferences(self, tmp_path, labeled):
        part = cluster_permutations(labeled.bundle, seed=1)
        reps = representatives(part, labeled.bundle)
        tuples = build_preferences_for_bundle(part, reps, labeled.bundle,
                                              per_representative=True)
        assert tuples
        path = str(tmp_path / "prefs.jsonl")
        write_preferences(tuples, path)
        back = bundle_io.read_preferences(path)
        assert len(back) == len(tuples)
        for mine, theirs in zip(tuples, back):
            assert preference_to_line(mine) == preference_to_line(theirs)
        assert preference_from_line(preference_to_line(tuples[0])).y_w == tuples[0].y_w


class TestCli:
    def run_pipeline(self, tmp_path, seed_args=()):
        out = tmp_path
        out.mkdir(parents=True, exist_ok=True)
        bundle = str(out / "bundle.hsb")
        partition = str(out / "partition.json")
        reps = str(out / "reps.json")
        prefs_path = str(out / "prefs.jsonl")
        assert main(["synth", "--modes", "3", "--dim", "16", "--n", "60",
                     "--noise", "0.05", "--out", bundle, *seed_args]) == 0
        assert main(["cluster", "--bundle", bundle, "--out", partition, *seed_args]) == 0
        assert main(["represent", "--bundle", bundle, "--partition", partition,
                     "--out", reps]) == 0
        assert main(["prefs", "--bundle", bundle, "--partition", partition,
                     "--reps", reps, "--per-representative", "--out", prefs_path]) == 0
        return [(out / name).read_bytes()
                for name in ("bundle.hsb", "bundle.hsb.json", "partition.json",
                             "reps.json", "prefs.jsonl")]

    def test_pipeline_deterministic(self, tmp_path):
        a = self.run_pipeline(tmp_path / "a", seed_args=("--seed", "42"))
        b = self.run_pipeline(tmp_path / "b", seed_args=("--seed", "42"))
        assert a == b

    def test_seed_env_override(self, tmp_path, monkeypatch):
        (tmp_path / "x").mkdir()
        (tmp_path / "y").mkdir()
        (tmp_path / "z").mkdir()
        monkeypatch.setenv("PERMSTAB_SEED", "7")
        env7 = self.run_pipeline(tmp_path / "x")
        monkeypatch.delenv("PERMSTAB_SEED")
        default42 = self.run_pipeline(tmp_path / "y")
        explicit7 = self.run_pipeline(tmp_path / "z", seed_args=("--seed", "7"))
        assert env7 == explicit7
        assert env7 != default42

    def test_bad_magic_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.hsb"
        bad.write_bytes(b"NOPE" + b"\x00" * 64)
        code = main(["cluster", "--bundle", str(bad), "--out", str(tmp_path / "p.json")])
        assert code == 1
        assert "BadMagic" in capsys.readouterr().err

    def test_missing_input_exit_code(self, tmp_path, capsys):
        code = main(["cluster", "--bundle", str(tmp_path / "absent.hsb"),
                     "--out", str(tmp_path / "p.json")])
        assert code == 2

    def test_metrics_report(self, tmp_path, capsys):
        pred = tmp_path / "pred.jsonl"
        gold = tmp_path / "gold.jsonl"
        pred.write_text(
            '{"query_id": "a", "prediction": "The capital is Paris."}\n'
            '{"query_id": "b", "prediction": "no idea"}\n'
        )
        gold.write_text(
            '{"query_id": "a", "gold_answers": ["Paris"]}\n'
            '{"query_id": "b", "gold_answers": ["42"]}\n'
        )
        assert main(["metrics", "--pred", str(pred), "--gold", str(gold)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["n"] == 2
        assert report["subem"] == 0.5

    def test_dpo_loss_command(self, tmp_path, capsys):
        path = tmp_path / "batch.jsonl"
        path.write_text(
            '{"logp_policy_w": -1.0, "logp_policy_l": -2.0, '
            '"logp_ref_w": -1.0, "logp_ref_l": -2.0}\n'
        )
        assert main(["dpo-loss", "--in", str(path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["loss"] == pytest.approx(np.log(2.0), abs=1e-12)
        assert report["mean_margin"] == 0.0

    def test_psr_command(self, tmp_path, capsys):
        path = tmp_path / "outcomes.jsonl"
        flags = [True] * 6 + [False] * 4
        path.write_text(json.dumps({"gold_position": 2, "correct_flags": flags}) + "\n")
        assert main(["psr", "--outcomes", str(path), "--position", "2"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["psr"] == pytest.approx(0.4)

    def test_project_csv(self, tmp_path):
        bundle = str(tmp_path / "bundle.hsb")
        coords = str(tmp_path / "coords.csv")
        assert main(["synth", "--modes", "2", "--dim", "8", "--n", "12",
                     "--noise", "0.05", "--seed", "3", "--out", bundle]) == 0
        assert main(["project", "--bundle", bundle, "--out", coords]) == 0
        lines = (tmp_path / "coords.csv").read_text().splitlines()
        assert lines[0] == "perm_index,pc1,pc2,answer"
        assert len(lines) == 13
        first = lines[1].split(",")
        assert first[0] == "0" and first[3].startswith("mode-")

    def test_outputs_stay_in_designated_paths(self, tmp_path, monkeypatch):
        workdir = tmp_path / "work"
        outdir = tmp_path / "out"
        workdir.mkdir()
        outdir.mkdir()
        monkeypatch.chdir(workdir)
        assert main(["synth", "--modes", "2", "--dim", "8", "--n", "12",
                     "--noise", "0.05", "--seed", "3",
                     "--out", str(outdir / "b.hsb")]) == 0
        assert sorted(p.name for p in workdir.iterdir()) == []
        assert sorted(p.name for p in outdir.iterdir()) == [
            "b.hsb", "b.hsb.json", "b.hsb.labels.json"
        ]
