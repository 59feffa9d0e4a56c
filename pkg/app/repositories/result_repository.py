import io
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd
from pydantic import BaseModel

from app.config import settings


logger = logging.getLogger(__name__)


class ResultRepository:
    """
    Writes result tables as UTF-8 CSV: one leading '#' header comment, a column
    header row, the rows in the given order and trailing '#' summary comments.
    """

    def __init__(self, path: Optional[str] = None, precision: Optional[int] = None):
        self.path = Path(path) if path else None
        self.precision = precision or settings.CSV_PRECISION

    def render(self, rows: Sequence[BaseModel], columns: List[str], header: str,
               summary: Sequence[str] = ()) -> str:
        records = [row.model_dump() for row in rows]
        frame = pd.DataFrame.from_records(records, columns=list(records[0].keys()) if records else columns)
        if "error" in frame.columns and frame["error"].notna().any():
            columns = columns + ["error"]
            frame["error"] = frame["error"].fillna("")

        buffer = io.StringIO()
        buffer.write(header + "\n")
        frame.to_csv(
            buffer,
            columns=columns,
            index=False,
            float_format=f"%.{self.precision - 1}e",
            na_rep="nan",
            lineterminator="\n",
        )
        for line in summary:
            buffer.write(f"# {line}\n")
        return buffer.getvalue()

    def write(self, rows: Sequence[BaseModel], columns: List[str], header: str,
              summary: Sequence[str] = ()) -> str:
        text = self.render(rows, columns, header, summary)
        if self.path is None:
            sys.stdout.write(text)
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(text, encoding="utf-8")
            logger.info(f"Wrote {len(rows)} rows to {self.path}")
        return text
