# app/services/fixture.py
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Set

import numpy as np
from pydantic import ValidationError

from app.core.errors import InvalidSpecError
from app.schemas.fixture import Fixture, FixtureSpec, FixtureUtterance
from app.schemas.posterior import PosteriorMatrix
from app.schemas.target import Strategy
from app.schemas.vocabulary import BLANK_ID, WORD_BOUNDARY, Vocabulary
from app.services import io
from app.services.labels import build_target, find_phrase_occurrences
from app.services.tokenizer import build_bias_list, tokenize_phrase, transcript_from_words

logger = logging.getLogger(__name__)

LETTERS = "abcdefghijklmnopqrstuvwxyz"
SUBWORD_POOL = [a + b for a in LETTERS for b in LETTERS]

# Split of the peak mass on a corrupted phrase frame
CONFUSABLE_SHARE = 0.55
TRUE_SHARE = 0.40
BLANK_SHARE = 0.05


def make_spec(**options) -> FixtureSpec:
    try:
        return FixtureSpec(**options)
    except ValidationError as e:
        raise InvalidSpecError(str(e))


def _contains(tokens: Sequence[int], pattern: Sequence[int]) -> bool:
    k = len(pattern)
    return any(list(tokens[i:i + k]) == list(pattern) for i in range(len(tokens) - k + 1))


class FixtureGenerator:
    """
    Builds peaky synthetic posteriors that stand in for a trained model.

    Every subword is a two-letter string, so the subword set is prefix-free and
    greedy tokenization of a generated word always returns the pieces it was
    built from.
    """

    def __init__(self, spec: FixtureSpec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)

    def generate(self) -> Fixture:
        vocab = self._vocabulary()
        lexicon = self._lexicon(vocab)
        confusable = self._confusables(vocab)
        if self.spec.corpus_bias_size is not None:
            utterances, corpus_bias_list = self._corpus_utterances(vocab, lexicon, confusable)
        else:
            corpus_bias_list = None
            utterances = [
                self._utterance(f"utt{index:04d}", vocab, lexicon, confusable)
                for index in range(self.spec.utterances)
            ]
        logger.info("generated %d fixture utterances (seed=%d)", len(utterances), self.spec.seed)
        return Fixture(
            spec=self.spec, vocab=vocab, lexicon=lexicon,
            utterances=utterances, corpus_bias_list=corpus_bias_list,
        )

    # ==================== INVENTORIES ====================

    def _vocabulary(self) -> Vocabulary:
        chosen = np.sort(self.rng.choice(len(SUBWORD_POOL), size=self.spec.vocab_size - 2, replace=False))
        return Vocabulary(entries=["", WORD_BOUNDARY] + [SUBWORD_POOL[i] for i in chosen])

    def _draw_word(self, pieces: Sequence[str]) -> str:
        low, high = self.spec.subwords_per_word
        length = int(self.rng.integers(low, high + 1))
        return "".join(pieces[i] for i in self.rng.integers(0, len(pieces), size=length))

    def _lexicon(self, vocab: Vocabulary) -> List[str]:
        pieces = vocab.entries[2:]
        words: List[str] = []
        seen: Set[str] = set()
        attempts = 0
        while len(words) < self.spec.lexicon_size:
            attempts += 1
            if attempts > 50 * self.spec.lexicon_size:
                raise InvalidSpecError(
                    f"cannot draw {self.spec.lexicon_size} distinct words from {len(pieces)} subwords"
                )
            word = self._draw_word(pieces)
            if word not in seen:
                seen.add(word)
                words.append(word)
        return words

    def _confusables(self, vocab: Vocabulary) -> Dict[int, int]:
        """A fixed cyclic shift, so a subword is never its own confusable."""
        ids = list(range(2, vocab.size))
        return {token: ids[(k + 1) % len(ids)] for k, token in enumerate(ids)}

    # ==================== UTTERANCES ====================

    def _draw_words(self, lexicon: List[str]) -> List[str]:
        low, high = self.spec.words_per_utterance
        n_words = int(self.rng.integers(low, high + 1))
        return [lexicon[i] for i in self.rng.integers(0, len(lexicon), size=n_words)]

    def _draw_phrases(self, words: List[str]) -> List[str]:
        """Bias-list sampling policy: with some probability, a handful of the utterance's words."""
        if self.rng.random() >= self.spec.bias_probability:
            return []
        distinct = list(dict.fromkeys(words))
        low, high = self.spec.phrases_per_utterance
        count = min(int(self.rng.integers(low, high + 1)), len(distinct))
        picks = np.sort(self.rng.choice(len(distinct), size=count, replace=False))
        return [distinct[i] for i in picks]

    def _utterance(self, utterance_id: str, vocab: Vocabulary, lexicon: List[str], confusable: Dict[int, int]):
        spec = self.spec
        rng = self.rng

        words = self._draw_words(lexicon)
        transcript = transcript_from_words(utterance_id, words, vocab)
        phrases = self._draw_phrases(words)

        distractors: List[str] = []
        if spec.distractors:
            present = set(words)
            candidates = [
                w for w in lexicon
                if w not in present and not _contains(transcript.tokens, tokenize_phrase(w, vocab))
            ]
            count = min(spec.distractors, len(candidates))
            picks = np.sort(rng.choice(len(candidates), size=count, replace=False))
            distractors = [candidates[i] for i in picks]

        texts = phrases + distractors
        texts = [texts[i] for i in rng.permutation(len(texts))]
        bias_list = build_bias_list(texts, vocab)
        distractor_ids = [vocab.size + i for i, text in enumerate(texts) if text in set(distractors)]
        return self._render(transcript, bias_list, distractor_ids, vocab, confusable)

    def _corpus_utterances(self, vocab: Vocabulary, lexicon: List[str], confusable: Dict[int, int]):
        """
        Every utterance shares one bias list of exactly `corpus_bias_size` phrases.

        The list holds the phrases sampled for the utterances (subsampled when
        there are more of them than fit) and is filled up with distractors
        that occur in no transcript.
        """
        size = self.spec.corpus_bias_size
        transcripts = []
        sampled: List[str] = []
        for index in range(self.spec.utterances):
            words = self._draw_words(lexicon)
            transcripts.append(transcript_from_words(f"utt{index:04d}", words, vocab))
            sampled.extend(self._draw_phrases(words))

        phrases = list(dict.fromkeys(sampled))
        if len(phrases) > size:
            keep = np.sort(self.rng.choice(len(phrases), size=size, replace=False))
            phrases = [phrases[i] for i in keep]
        distractors = self._rare_words(size - len(phrases), vocab, lexicon, transcripts)

        texts = phrases + distractors
        texts = [texts[i] for i in self.rng.permutation(len(texts))]
        bias_list = build_bias_list(texts, vocab)
        absent = set(distractors)
        distractor_ids = [vocab.size + i for i, text in enumerate(texts) if text in absent]
        logger.info(
            "corpus bias list: %d phrases, %d distractors", len(phrases), len(distractors)
        )
        utterances = [
            self._render(transcript, bias_list, distractor_ids, vocab, confusable)
            for transcript in transcripts
        ]
        return utterances, bias_list

    def _rare_words(self, count: int, vocab: Vocabulary, lexicon: List[str], transcripts) -> List[str]:
        """Words whose subwords occur in no transcript: unused lexicon entries first, then fresh draws."""
        low, high = self.spec.subwords_per_word
        ngrams: Set[tuple] = set()
        for transcript in transcripts:
            tokens = transcript.tokens
            for k in range(low, high + 1):
                ngrams.update(tuple(tokens[i:i + k]) for i in range(len(tokens) - k + 1))

        chosen: List[str] = []
        seen: Set[str] = set(w for t in transcripts for w in t.words)
        for word in lexicon:
            if len(chosen) == count:
                return chosen
            if word not in seen and tuple(tokenize_phrase(word, vocab)) not in ngrams:
                seen.add(word)
                chosen.append(word)

        seen.update(lexicon)
        pieces = vocab.entries[2:]
        attempts = 0
        while len(chosen) < count:
            attempts += 1
            if attempts > 50 * count:
                raise InvalidSpecError(f"cannot draw {count} distractors absent from every transcript")
            word = self._draw_word(pieces)
            if word in seen:
                continue
            seen.add(word)
            if tuple(tokenize_phrase(word, vocab)) not in ngrams:
                chosen.append(word)
        return chosen

    def _render(self, transcript, bias_list, distractor_ids: List[int], vocab: Vocabulary, confusable: Dict[int, int]):
        """Target and posteriors of one transcript under its bias list."""
        spec = self.spec
        vocab_size = vocab.size

        occurrences = find_phrase_occurrences(transcript, bias_list)
        target = build_target(transcript, occurrences, vocab_size, spec.target_mode)

        # target positions holding phrase subwords, which corruption may hit
        phrase_positions: Set[int] = set()
        if spec.target_mode == Strategy.TA:
            for span in target.spans:
                phrase_positions.update(range(span.start, span.end - 1))
        elif spec.target_mode == Strategy.NONE:
            for occ in occurrences:
                phrase_positions.update(range(occ.start, occ.end))

        emitted = []
        for position, token in enumerate(target.tokens):
            if token == vocab.id_of(WORD_BOUNDARY):
                self._maybe_false_trigger(emitted, position, target.tokens, phrase_positions, distractor_ids, vocab_size)
            emitted.append((token, position in phrase_positions))
        self._maybe_false_trigger(
            emitted, len(target.tokens), target.tokens, phrase_positions, distractor_ids, vocab_size
        )

        posteriors, corrupted = self._posteriors(emitted, vocab_size, bias_list.n, confusable)
        logger.debug(
            "%s: %d words, %d occurrences, %d bias phrases, %d corrupted frames",
            transcript.utterance_id, len(transcript.words), len(occurrences), bias_list.n, len(corrupted),
        )
        return FixtureUtterance(
            transcript=transcript, bias_list=bias_list, target=target,
            posteriors=posteriors, corrupted_frames=corrupted,
        )

    def _maybe_false_trigger(self, emitted, position, tokens, phrase_positions, distractor_ids, vocab_size):
        """Spurious distractor bias token after a word that is not a phrase."""
        if self.spec.target_mode != Strategy.TA or not distractor_ids or self.spec.false_trigger_rate == 0:
            return
        previous = position - 1
        if previous < 0 or previous in phrase_positions or tokens[previous] >= vocab_size:
            return
        if self.rng.random() < self.spec.false_trigger_rate:
            emitted.append((int(self.rng.choice(distractor_ids)), False))

    def _posteriors(self, emitted, vocab_size: int, n: int, confusable: Dict[int, int]):
        spec = self.spec
        width = vocab_size + n
        alpha = spec.alpha

        labels = [BLANK_ID]
        corrupted_flags = [False]
        for token, corruptible in emitted:
            run = int(self.rng.integers(spec.frames_per_token[0], spec.frames_per_token[1] + 1))
            corrupt = corruptible and spec.rho > 0 and self.rng.random() < spec.rho
            labels.append(token)
            corrupted_flags.append(corrupt)
            labels.extend([BLANK_ID] * (run - 1))
            corrupted_flags.extend([False] * (run - 1))

        values = np.full((len(labels), width), (1.0 - alpha) / width)
        corrupted = []
        for frame, (label, corrupt) in enumerate(zip(labels, corrupted_flags)):
            if corrupt:
                values[frame, confusable[label]] += CONFUSABLE_SHARE * alpha
                values[frame, label] += TRUE_SHARE * alpha
                values[frame, BLANK_ID] += BLANK_SHARE * alpha
                corrupted.append(frame)
            else:
                values[frame, label] += alpha
        return PosteriorMatrix(values=values, vocab_size=vocab_size, n=n), corrupted


def gen_fixture(spec: FixtureSpec) -> Fixture:
    return FixtureGenerator(spec).generate()


def write_fixture(fixture: Fixture, directory) -> Dict[str, str]:
    """
    Vocabulary, references, per-utterance bias lists and posteriors, targets and spec.json.

    A corpus-level bias list is also written on its own as bias_list.txt.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "vocab": str(directory / "vocab.txt"),
        "references": str(directory / "references.tsv"),
        "bias_dir": str(directory / "bias"),
        "posteriors_dir": str(directory / "posteriors"),
        "targets": str(directory / "targets.tsv"),
    }
    io.write_vocabulary(directory / "vocab.txt", fixture.vocab)
    io.write_tsv(directory / "references.tsv", {u.transcript.utterance_id: u.transcript.words for u in fixture.utterances})
    for utterance in fixture.utterances:
        uid = utterance.transcript.utterance_id
        io.write_bias_list(directory / "bias" / f"{uid}.txt", utterance.bias_list)
        io.write_posteriors(directory / "posteriors" / f"{uid}.dvp", utterance.posteriors)
    io.write_targets(directory / "targets.tsv", [(u.transcript.utterance_id, u.target) for u in fixture.utterances])
    if fixture.corpus_bias_list is not None:
        io.write_bias_list(directory / "bias_list.txt", fixture.corpus_bias_list)
        paths["bias_list"] = str(directory / "bias_list.txt")
    (directory / "spec.json").write_text(fixture.spec.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return paths
