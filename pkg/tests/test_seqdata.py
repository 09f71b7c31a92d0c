from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from demotif import seqdata as sd

dna = st.text(alphabet="ACGT", min_size=1, max_size=60)


def write(tmp_path, text):
    p = tmp_path / "d.tsv"
    p.write_text(text)
    return p


class TestParse:
    def test_field_mapping(self, tmp_path):
        ds = sd.parse_dataset(write(tmp_path, "s1\tACGT\t1\n"))
        assert ds.sequences == (sd.Sequence("s1", "ACGT", 1),)
        assert ds.length == 4

    def test_invalid_character(self, tmp_path):
        with pytest.raises(sd.DataError, match="invalid character 'X' at line 1"):
            sd.parse_dataset(write(tmp_path, "s1\tACXT\t1\n"))

    def test_inconsistent_length(self, tmp_path):
        with pytest.raises(sd.DataError, match="inconsistent sequence length"):
            sd.parse_dataset(write(tmp_path, "a\tACGT\t1\nb\tACGTA\t0\n"))

    def test_malformed_line_number(self, tmp_path):
        with pytest.raises(sd.DataError, match="line 2"):
            sd.parse_dataset(write(tmp_path, "a\tACGT\t1\nb ACGT 0\n"))

    def test_invalid_label(self, tmp_path):
        with pytest.raises(sd.DataError, match="invalid label"):
            sd.parse_dataset(write(tmp_path, "a\tACGT\t2\n"))

    def test_write_parse_round_trip(self, tmp_path):
        ds = sd.generate_synthetic(3, 3, 12, sd.consensus_pwm("ACG"), seed=1)
        sd.write_dataset(ds, tmp_path / "x.tsv")
        assert sd.parse_dataset(tmp_path / "x.tsv") == ds

    def test_sequence_invariants(self):
        with pytest.raises(sd.DataError):
            sd.Sequence("x", "", 1)
        with pytest.raises(sd.DataError):
            sd.Sequence("x", "ACU", 1)


class TestOneHot:
    def test_single_bases(self):
        np.testing.assert_array_equal(sd.encode_one_hot("A"), [[1, 0, 0, 0]])
        np.testing.assert_array_equal(sd.encode_one_hot("N"), [[0.25] * 4])

    def test_acgt_identity(self):
        np.testing.assert_array_equal(sd.encode_one_hot("ACGT"), np.eye(4))

    @given(st.text(alphabet="ACGTN", min_size=1, max_size=60))
    def test_rows_sum_to_one(self, s):
        np.testing.assert_array_equal(sd.encode_one_hot(s).sum(axis=1), 1.0)

    @given(dna)
    def test_decode_inverts_encode(self, s):
        assert sd.decode_argmax(sd.encode_one_hot(s)) == s


class TestSynthetic:
    def test_counts_and_length(self):
        ds = sd.generate_synthetic(500, 500, 101, sd.consensus_pwm("ACGTACGT"), seed=7)
        assert len(ds) == 1000 and ds.length == 101
        assert Counter(ds.labels.tolist()) == {1: 500, 0: 500}

    def test_deterministic_pwm_embeds_consensus(self):
        ds = sd.generate_synthetic(200, 5, 30, sd.consensus_pwm("ACGTACGT"), seed=3)
        assert all("ACGTACGT" in s.bases for s in ds.positives())

    def test_bit_reproducible(self, tmp_path):
        args = (20, 20, 50, sd.consensus_pwm("GATTACA"), 11)
        sd.write_dataset(sd.generate_synthetic(*args), tmp_path / "a.tsv")
        sd.write_dataset(sd.generate_synthetic(*args), tmp_path / "b.tsv")
        assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()

    def test_different_seed_differs(self):
        pwm = sd.consensus_pwm("GATTACA")
        assert sd.generate_synthetic(5, 5, 50, pwm, 1) != sd.generate_synthetic(5, 5, 50, pwm, 2)

    def test_pwm_too_wide(self):
        with pytest.raises(sd.DataError):
            sd.generate_synthetic(1, 1, 5, sd.consensus_pwm("ACGTAC"), seed=0)

    def test_soft_pwm_sampling_frequencies(self):
        pwm = np.array([[0.7, 0.1, 0.1, 0.1]])
        ds = sd.generate_synthetic(4000, 1, 1, pwm, seed=5)
        freq = np.mean([s.bases == "A" for s in ds.positives()])
        assert abs(freq - 0.7) < 0.03


class TestShuffle:
    def test_constant_string(self):
        (neg,) = sd.shuffle_negatives([sd.Sequence("p", "AAAA", 1)], seed=0)
        assert neg.bases == "AAAA" and neg.label == 0

    def test_permutation(self):
        (neg,) = sd.shuffle_negatives([sd.Sequence("p", "ACGT", 1)], seed=0)
        assert sorted(neg.bases) == list("ACGT") and neg.label == 0

    @given(st.lists(dna, min_size=1, max_size=10), st.integers(0, 2**32 - 1))
    def test_multiset_and_determinism(self, strings, seed):
        pos = [sd.Sequence(f"s{i}", s, 1) for i, s in enumerate(strings)]
        out = sd.shuffle_negatives(pos, seed)
        assert out == sd.shuffle_negatives(pos, seed)
        for p, n in zip(pos, out):
            assert Counter(p.bases) == Counter(n.bases)

    def test_empty(self):
        with pytest.raises(sd.DataError):
            sd.shuffle_negatives([], seed=0)


class TestSplit:
    def make(self, n_pos, n_neg):
        seqs = [sd.Sequence(f"p{i}", "ACGT", 1) for i in range(n_pos)]
        seqs += [sd.Sequence(f"n{i}", "TGCA", 0) for i in range(n_neg)]
        return sd.Dataset(seqs)

    def test_sizes(self):
        tr, te = sd.split(self.make(50, 50), 0.8, seed=0)
        assert (len(tr), len(te)) == (80, 20)

    def test_partition(self):
        ds = self.make(37, 23)
        tr, te = sd.split(ds, 0.7, seed=4)
        ids_tr, ids_te = {s.id for s in tr}, {s.id for s in te}
        assert not ids_tr & ids_te
        assert ids_tr | ids_te == {s.id for s in ds}

    def test_stratified(self):
        tr, te = sd.split(self.make(50, 50), 0.8, seed=1)
        for part in (tr, te):
            c = Counter(part.labels.tolist())
            assert abs(c[1] - c[0]) <= 1

    def test_deterministic(self):
        ds = self.make(10, 10)
        assert sd.split(ds, 0.5, 3) == sd.split(ds, 0.5, 3)

    def test_empty_partition(self):
        with pytest.raises(sd.DataError):
            sd.split(self.make(1, 1), 0.9, seed=0)
