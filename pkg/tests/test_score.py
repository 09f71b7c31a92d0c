import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from demotif import score as sc
from demotif.seqdata import ALPHABET, Sequence, consensus_pwm
from demotif.motif import to_pwm

UNIFORM8 = np.full((8, 4), 0.25)


def brute_ama(pwm, s):
    W = len(pwm)
    odds = []
    for t in range(len(s) - W + 1):
        o = 1.0
        for i in range(W):
            o *= pwm[i][ALPHABET.index(s[t + i])] / 0.25
        odds.append(o)
    return sum(odds) / len(odds)


def random_pwm(rng, w):
    return to_pwm(rng.random((w, 4)), 0.1)


class TestAma:
    @given(st.text(alphabet="ACGT", min_size=8, max_size=40))
    def test_uniform_is_one(self, s):
        assert sc.ama_score(UNIFORM8, s) == 1.0

    def test_single_site_odds(self):
        assert sc.ama_score(consensus_pwm("AC"), "AC") == 16.0

    def test_zero_probability_site(self):
        assert sc.ama_score(consensus_pwm("AA"), "CC") == 0.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            pwm = random_pwm(rng, int(rng.integers(1, 6)))
            s = "".join(rng.choice(list(ALPHABET), size=int(rng.integers(6, 20))))
            assert sc.ama_score(pwm, s) == pytest.approx(brute_ama(pwm, s), rel=1e-12)

    def test_too_wide(self):
        with pytest.raises(sc.ScoreError):
            sc.ama_score(UNIFORM8, "ACGT")

    def test_rejects_n(self):
        with pytest.raises(sc.ScoreError):
            sc.ama_score(consensus_pwm("A"), "ANA")

    def test_monotone_in_aligned_entry(self):
        rng = np.random.default_rng(1)
        pwm = random_pwm(rng, 3)
        s = "GATTC"
        base = sc.ama_score(pwm, s)
        bumped = pwm.copy()
        bumped[1, ALPHABET.index("A")] += 0.05  # 'A' at position 1 is aligned at offset 0
        assert sc.ama_score(bumped, s) > base


class TestCompare:
    seqs = [Sequence(f"s{i}", s, 1) for i, s in enumerate(["ACGTACGTAA", "TTTTACGTAC", "GGGGCCCCAA"])]

    def test_identical_all_ties(self):
        pwm = consensus_pwm("ACG")
        rep = sc.compare_on_sequences(pwm, pwm, self.seqs)
        assert (rep.a_wins, rep.b_wins, rep.ties) == (0, 0, 3)

    def test_empty(self):
        with pytest.raises(sc.ScoreError, match="no sequences"):
            sc.compare_on_sequences(UNIFORM8, UNIFORM8, [])

    def test_width_violation(self):
        with pytest.raises(sc.ScoreError):
            sc.compare_on_sequences(np.full((11, 4), 0.25), UNIFORM8, self.seqs)

    def test_counts_sum_and_permutation(self):
        a = to_pwm(consensus_pwm("ACGT"), 0.1)
        b = np.full((4, 4), 0.25)
        rep = sc.compare_on_sequences(a, b, self.seqs)
        assert rep.a_wins + rep.b_wins + rep.ties == rep.n == 3
        perm = [2, 0, 1]
        rep2 = sc.compare_on_sequences(a, b, [self.seqs[i] for i in perm])
        np.testing.assert_array_equal(rep2.scores_a, rep.scores_a[perm])
        assert rep2.summary_line() == rep.summary_line()

    def test_tsv_layout(self):
        rep = sc.compare_on_sequences(consensus_pwm("AC"), consensus_pwm("AC"), self.seqs[:1])
        assert rep.to_tsv().splitlines()[0] == "seq_id\tscore_a\tscore_b\twinner"
        assert rep.to_tsv().splitlines()[1].endswith("\ttie")


class TestSimilarity:
    def test_self(self):
        pwm = random_pwm(np.random.default_rng(2), 6)
        off, s = sc.motif_similarity(pwm, pwm)
        assert off == 0 and s == pytest.approx(1.0, abs=1e-12)

    def test_window_of_shifted_pwm_realigns(self):
        rng = np.random.default_rng(3)
        pwm = random_pwm(rng, 10)
        shifted = np.roll(pwm, -3, axis=0)
        # the first 7 columns of the cyclic shift are columns 3..9 of the original
        off, s = sc.motif_similarity(shifted[:7], pwm)
        assert off == 3 and s == pytest.approx(1.0, abs=1e-12)

    def test_uniform_scores_zero(self):
        rng = np.random.default_rng(4)
        assert sc.motif_similarity(np.full((4, 4), 0.25), random_pwm(rng, 9))[1] == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31))
    def test_symmetric(self, wa, wb, seed):
        rng = np.random.default_rng(seed)
        a, b = random_pwm(rng, wa), random_pwm(rng, wb)
        (oa, sa), (ob, sb) = sc.motif_similarity(a, b), sc.motif_similarity(b, a)
        assert sa == pytest.approx(sb, abs=1e-12)
        assert oa == ob
        assert -1.0 - 1e-12 <= sa <= 1.0 + 1e-12

    def test_exhaustive_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a, b = random_pwm(rng, 3), random_pwm(rng, 7)
            best = max((np.mean([np.corrcoef(a[i], b[o + i])[0, 1] for i in range(3)]), -o)
                       for o in range(5))
            off, s = sc.motif_similarity(a, b)
            assert s == pytest.approx(best[0], abs=1e-12) and off == -best[1]
