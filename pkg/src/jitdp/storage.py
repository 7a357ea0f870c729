"""File formats shared by the pipeline stages.

All JSON is written with sorted keys so repeated runs produce identical
bytes. JSONL readers yield (line_number, object) pairs so malformed lines
can be reported by position.
"""

import json

from .errors import CorruptFile, MalformedLine
from .mining import CommitRecord, FileChange
from .szz import Label


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield line_number, json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(str(exc), line_number=line_number) from exc


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False))
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorruptFile("%s: %s" % (path, exc)) from exc


# ---------------------------------------------------------------------
# domain type <-> dict


def record_to_dict(record):
    return {
        "hash": record.hash,
        "parent_hashes": list(record.parent_hashes),
        "author_id": record.author_id,
        "author_time": record.author_time,
        "message": record.message,
        "files": [
            {
                "old_path": fc.old_path,
                "new_path": fc.new_path,
                "change_kind": fc.change_kind,
                "lines_added": fc.lines_added,
                "lines_deleted": fc.lines_deleted,
                "lines_before": fc.lines_before,
                "deleted_line_numbers": list(fc.deleted_line_numbers),
            }
            for fc in record.files
        ],
    }


def record_from_dict(d):
    try:
        return CommitRecord(
            hash=d["hash"],
            parent_hashes=tuple(d["parent_hashes"]),
            author_id=d["author_id"],
            author_time=int(d["author_time"]),
            message=d["message"],
            files=tuple(
                FileChange(
                    old_path=f["old_path"],
                    new_path=f["new_path"],
                    change_kind=f["change_kind"],
                    lines_added=int(f["lines_added"]),
                    lines_deleted=int(f["lines_deleted"]),
                    lines_before=int(f["lines_before"]),
                    deleted_line_numbers=tuple(f["deleted_line_numbers"]),
                )
                for f in d["files"]
            ),
        )
    except (KeyError, TypeError) as exc:
        raise CorruptFile("bad commit record: %s" % exc) from exc


def metrics_to_dict(sha, m):
    return {"hash": sha, "metrics": m.as_dict()}


def metrics_from_dict(d):
    try:
        return d["hash"], dict(d["metrics"])
    except (KeyError, TypeError) as exc:
        raise CorruptFile("bad metrics record: %s" % exc) from exc


def label_to_dict(label):
    return {
        "hash": label.hash,
        "label": 1 if label.buggy else 0,
        "provenance": list(label.fixed_by),
    }


def label_from_dict(d):
    try:
        return Label(
            hash=d["hash"],
            buggy=bool(d["label"]),
            fixed_by=tuple(d["provenance"]),
        )
    except (KeyError, TypeError) as exc:
        raise CorruptFile("bad label record: %s" % exc) from exc
