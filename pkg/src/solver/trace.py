"""
Line-delimited solver trace records
"""
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Tuple, Union

from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)


class AtomEnclosure(BaseModel):
    """Enclosure of one atom term on the traced box"""

    atom: str
    lo: float
    hi: float


class TraceRecord(BaseModel):
    """One visited piece of a quantifier block"""

    level: int = Field(description="Quantifier block nesting depth")
    split_depth: int = Field(description="Bisections along the piece lineage")
    quantifier: str
    box: Dict[str, Tuple[float, float]]
    verdict: str
    atoms: List[AtomEnclosure] = Field(default_factory=list)


class TraceWriter:
    """Appends trace records to a file, one JSON object per line"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("", encoding="utf-8")

    def write(self, records: Iterable[TraceRecord]) -> int:
        count = 0
        with self.path.open("a", encoding="utf-8") as handle:
            for record in records:
                handle.write(record.model_dump_json() + "\n")
                count += 1
        logger.debug(f"Wrote {count} trace records to {self.path}")
        return count


def read_trace(path: Union[str, Path]) -> List[TraceRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [TraceRecord.model_validate_json(line) for line in lines if line.strip()]
