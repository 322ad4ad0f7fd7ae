# app/schemas/vocabulary.py
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator
from typing import Dict, List, Sequence

BLANK_ID = 0
WORD_BOUNDARY = "▁"


class Vocabulary(BaseModel):
    """Subword inventory; entry 0 is the CTC blank and renders as ""."""

    model_config = ConfigDict(frozen=True)

    entries: List[str] = Field(..., min_length=1)
    blank_id: int = BLANK_ID

    _index: Dict[str, int] = PrivateAttr(default_factory=dict)

    @field_validator("blank_id")
    def validate_blank_id(cls, v):
        if v != BLANK_ID:
            raise ValueError("blank_id is fixed at 0")
        return v

    @field_validator("entries")
    def validate_entries(cls, v):
        if v[0] != "":
            raise ValueError("entry 0 must be the blank (empty string)")
        seen = set()
        for i, entry in enumerate(v[1:], start=1):
            if not entry:
                raise ValueError(f"entry {i} is empty; only the blank may be empty")
            if entry in seen:
                raise ValueError(f"duplicate entry {entry!r} at {i}")
            seen.add(entry)
        return v

    def model_post_init(self, __context) -> None:
        self._index = {entry: i for i, entry in enumerate(self.entries) if i != BLANK_ID}

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def max_entry_length(self) -> int:
        return max(len(entry) for entry in self.entries)

    def id_of(self, subword: str) -> int:
        return self._index[subword]

    def lookup(self, subword: str):
        return self._index.get(subword)

    def is_subword(self, token_id: int) -> bool:
        return BLANK_ID < token_id < self.size

    def text_of(self, ids: Sequence[int]) -> str:
        """Join entry strings and turn boundary markers back into spaces."""
        return "".join(self.entries[i] for i in ids).replace(WORD_BOUNDARY, " ")

    def render(self, ids: Sequence[int]) -> List[str]:
        return self.text_of(ids).split()
