"""Loading, filtering, splitting, batching, and the synthetic corpus."""

import json
import logging

import numpy as np
import pytest

from orpokit import data
from orpokit.data import (DropStats, RawTriple, filter_and_tokenize,
                          load_jsonl, make_batches, make_synthetic_corpus,
                          split, write_jsonl)
from orpokit.lm import build_vocab, tokenize


@pytest.fixture()
def jsonl(tmp_path):
    def write(lines):
        path = tmp_path / "rows.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path
    return write


class TestLoadJsonl:
    def test_valid_row(self, jsonl):
        rows, errors = load_jsonl(jsonl(
            ['{"prompt":"p","chosen":"a","rejected":"b"}']))
        assert errors == []
        assert rows == [RawTriple(prompt="p", chosen="a", rejected="b")]

    def test_malformed_line_is_reported_and_skipped(self, jsonl):
        rows, errors = load_jsonl(jsonl(
            ['{"prompt":"p","chosen":"a","rejected":"b"}',
             "not json",
             '{"prompt":"q","chosen":"c","rejected":"d"}']))
        assert len(rows) == 2
        assert len(errors) == 1
        assert errors[0].startswith("line 2:")

    def test_missing_field_reported(self, jsonl):
        rows, errors = load_jsonl(jsonl(['{"prompt":"p","chosen":"a"}']))
        assert rows == []
        assert "rejected" in errors[0]

    def test_non_string_field_reported(self, jsonl):
        _, errors = load_jsonl(jsonl(
            ['{"prompt":"p","chosen":3,"rejected":"b"}']))
        assert "non-string" in errors[0]

    def test_empty_file_warns(self, tmp_path, caplog):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        with caplog.at_level(logging.WARNING):
            rows, errors = load_jsonl(path)
        assert rows == [] and errors == []
        assert any("no usable rows" in r.message for r in caplog.records)

    def test_round_trip_with_writer(self, tmp_path):
        rows = make_synthetic_corpus(5, seed=3)
        path = tmp_path / "corpus.jsonl"
        write_jsonl(rows, path)
        back, errors = load_jsonl(path)
        assert errors == []
        assert back == rows


class TestFilterAndTokenize:
    @pytest.fixture()
    def vocab(self):
        return build_vocab(["alpha beta gamma delta"])

    def test_identical_pair_dropped(self, vocab):
        rows = [RawTriple("alpha", "beta", "beta")]
        kept, stats = filter_and_tokenize(rows, vocab)
        assert kept == []
        assert stats.identical == 1

    def test_token_level_identity_also_dropped(self, vocab):
        # Two unknown strings collapse to the same unk sequence.
        rows = [RawTriple("alpha", "zzz", "yyy")]
        kept, stats = filter_and_tokenize(rows, vocab)
        assert kept == []
        assert stats.identical == 1

    def test_empty_response_dropped(self, vocab):
        rows = [RawTriple("alpha", "", "beta")]
        kept, stats = filter_and_tokenize(rows, vocab)
        assert kept == []
        assert stats.empty == 1

    def test_long_prompt_dropped(self, vocab):
        rows = [RawTriple("alpha " * 9, "beta", "gamma")]
        kept, stats = filter_and_tokenize(rows, vocab, prompt_cap=8)
        assert kept == []
        assert stats.too_long == 1

    def test_truncation_keeps_eos_terminal(self, vocab):
        rows = [RawTriple("alpha", "beta " * 30, "gamma")]
        kept, _ = filter_and_tokenize(rows, vocab, max_len=6)
        y_w = kept[0].y_w
        assert y_w.size == 6
        assert y_w[-1] == vocab.eos_id

    def test_responses_are_eos_terminated(self, vocab):
        rows = [RawTriple("alpha", "beta", "gamma")]
        kept, _ = filter_and_tokenize(rows, vocab)
        assert kept[0].y_w[-1] == vocab.eos_id
        assert kept[0].y_l[-1] == vocab.eos_id
        np.testing.assert_array_equal(kept[0].x,
                                      tokenize(vocab, "alpha"))

    def test_stats_account_for_every_row(self, vocab):
        rows = [
            RawTriple("alpha", "beta", "beta"),      # identical
            RawTriple("alpha", "", "beta"),          # empty
            RawTriple("alpha " * 9, "beta", "gamma"),  # too long
            RawTriple("alpha", "beta", "gamma"),     # kept
            RawTriple("beta", "gamma", "delta"),     # kept
        ]
        kept, stats = filter_and_tokenize(rows, vocab, prompt_cap=8)
        assert stats.identical + stats.empty + stats.too_long + stats.kept \
            == len(rows)
        assert stats.kept == len(kept) == 2

    def test_as_dict_shape(self):
        d = DropStats(identical=1, empty=2, too_long=3, kept=4).as_dict()
        assert d == {"identical": 1, "empty": 2, "too_long": 3, "kept": 4}


class TestSplit:
    def test_sizes(self):
        parts = split(list(range(100)), (0.8, 0.1, 0.1), seed=1)
        assert (len(parts.train), len(parts.eval), len(parts.test)) \
            == (80, 10, 10)

    def test_same_seed_same_membership(self):
        a = split(list(range(50)), (0.6, 0.2, 0.2), seed=4)
        b = split(list(range(50)), (0.6, 0.2, 0.2), seed=4)
        assert a.train == b.train and a.eval == b.eval and a.test == b.test

    def test_different_seed_moves_rows(self):
        a = split(list(range(50)), (0.6, 0.2, 0.2), seed=4)
        b = split(list(range(50)), (0.6, 0.2, 0.2), seed=5)
        assert a.train != b.train

    def test_partition_is_exact(self):
        parts = split(list(range(37)), (0.5, 0.25, 0.25), seed=2)
        together = sorted(parts.train + parts.eval + parts.test)
        assert together == list(range(37))

    def test_bad_fractions_rejected(self):
        with pytest.raises(ValueError, match="sum to 1"):
            split(list(range(10)), (0.5, 0.5, 0.5), seed=0)
        with pytest.raises(ValueError, match="positive"):
            split(list(range(10)), (1.0, 0.0, 0.0), seed=0)

    def test_empty_part_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            split(list(range(3)), (0.9, 0.05, 0.05), seed=0)


class TestMakeBatches:
    def test_tail_batch_kept(self):
        batches = make_batches(list(range(10)), 4, seed=0, epoch=0)
        assert [len(b) for b in batches] == [4, 4, 2]

    def test_epochs_reshuffle(self):
        a = make_batches(list(range(32)), 8, seed=0, epoch=0)
        b = make_batches(list(range(32)), 8, seed=0, epoch=1)
        assert a != b

    def test_fixed_seed_epoch_reproduces(self):
        a = make_batches(list(range(32)), 8, seed=3, epoch=2)
        b = make_batches(list(range(32)), 8, seed=3, epoch=2)
        assert a == b

    def test_batches_cover_the_data(self):
        batches = make_batches(list(range(17)), 5, seed=1, epoch=0)
        assert sorted(x for b in batches for x in b) == list(range(17))

    def test_bad_batch_size(self):
        with pytest.raises(ValueError):
            make_batches([1], 0, seed=0, epoch=0)


class TestSyntheticCorpus:
    def test_single_row(self):
        rows = make_synthetic_corpus(1, seed=0)
        assert len(rows) == 1
        assert rows[0].chosen != rows[0].rejected

    def test_styles_are_separable(self):
        rows = make_synthetic_corpus(50, seed=0)
        for row in rows:
            assert any(row.chosen.endswith(c)
                       for c in data._POLITE_CLOSINGS)
            assert any(row.rejected.endswith(c)
                       for c in data._RUDE_CLOSINGS)

    def test_shared_content_prefix(self):
        # Both responses carry the same content clause so chosen-only
        # training lifts most rejected contexts too.
        for row in make_synthetic_corpus(50, seed=1):
            content = row.chosen.rsplit(" ", 3)[0]
            assert row.rejected.startswith(content)

    def test_chosen_never_equals_rejected(self):
        rows = make_synthetic_corpus(300, seed=2)
        assert all(r.chosen != r.rejected for r in rows)

    def test_deterministic_in_n_and_seed(self):
        assert make_synthetic_corpus(40, seed=9) \
            == make_synthetic_corpus(40, seed=9)
        assert make_synthetic_corpus(40, seed=9) \
            != make_synthetic_corpus(40, seed=10)

    def test_quality_word_is_a_function_of_topic_and_aspect(self):
        seen = {}
        for row in make_synthetic_corpus(500, seed=4):
            words = row.chosen.split()
            key = (words[1], words[2])  # topic, aspect
            quality = words[4]
            assert seen.setdefault(key, quality) == quality

    def test_n_must_be_positive(self):
        with pytest.raises(ValueError):
            make_synthetic_corpus(0, seed=0)

    def test_writer_emits_sorted_keys(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(make_synthetic_corpus(2, seed=0), path)
        first = path.read_text(encoding="utf-8").splitlines()[0]
        assert list(json.loads(first)) == ["chosen", "prompt", "rejected"]
