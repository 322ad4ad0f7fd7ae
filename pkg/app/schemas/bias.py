# app/schemas/bias.py
from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing import List, Optional

from app.schemas.vocabulary import BLANK_ID


class BiasPhrase(BaseModel):
    model_config = ConfigDict(frozen=True)

    text: str = Field(..., min_length=1)
    subwords: List[int] = Field(..., min_length=1)

    @field_validator("subwords")
    def validate_subwords(cls, v):
        if any(s == BLANK_ID for s in v):
            raise ValueError("phrase subwords may not contain the blank")
        if any(s < 0 for s in v):
            raise ValueError("subword ids are non-negative")
        return v

    @property
    def k(self) -> int:
        return len(self.subwords)

    @property
    def words(self) -> List[str]:
        return self.text.split()


class BiasList(BaseModel):
    """Ordered contextual phrases; phrase i owns dynamic id V + i."""

    model_config = ConfigDict(frozen=True)

    phrases: List[BiasPhrase] = Field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.phrases)

    def dynamic_id(self, index: int, vocab_size: int) -> int:
        if not 0 <= index < self.n:
            raise IndexError(f"phrase index {index} outside [0, {self.n})")
        return vocab_size + index

    def dynamic_ids(self, vocab_size: int) -> List[int]:
        return list(range(vocab_size, vocab_size + self.n))

    def phrase_index(self, token_id: int, vocab_size: int) -> Optional[int]:
        """Phrase index for a dynamic id, None for base-vocabulary ids."""
        index = token_id - vocab_size
        if 0 <= index < self.n:
            return index
        return None

    @property
    def texts(self) -> List[str]:
        return [phrase.text for phrase in self.phrases]
