"""Minimal reader for the classifier's JSON-lines dataset format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class DatasetError(Exception):
    pass


@dataclass
class Record:
    id: str
    text: str
    comments: list[str] = field(default_factory=list)
    image: str | None = None


def read_records(path) -> list[Record]:
    records: list[Record] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {line_no}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj.get("id"), str) or not isinstance(obj.get("text"), str):
                raise DatasetError(f"line {line_no}: missing or invalid 'id'/'text'")
            comments = obj.get("comments", [])
            if not isinstance(comments, list) or not all(isinstance(c, str) for c in comments):
                raise DatasetError(f"line {line_no}: 'comments' must be an array of strings")
            image = obj.get("image")
            if image is not None and not isinstance(image, str):
                raise DatasetError(f"line {line_no}: 'image' must be a string or null")
            if obj["id"] in seen:
                raise DatasetError(f"line {line_no}: duplicate id '{obj['id']}'")
            seen.add(obj["id"])
            records.append(Record(id=obj["id"], text=obj["text"], comments=list(comments), image=image))
    return records
