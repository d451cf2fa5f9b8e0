import re
from pathlib import Path

from haff import code_to_aslt
from haff.runtime import parse_args_text

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "src" / "haff" / "data"
CRASH_CORPUS = DATA / "corpus"
ROUNDTRIP_CORPUS = Path(__file__).resolve().parent / "corpus" / "roundtrip"
FLIGHT = DATA / "flightbooking"
GOLDEN = Path(__file__).resolve().parent / "golden"

_ENTRY = re.compile(r"//\s*entry:\s*(\w+)[ \t]*(.*)")


def crash_programs() -> list[Path]:
    return sorted(CRASH_CORPUS.glob("*.svc"))


def load_program(path: Path):
    """(source, tree, entry method, args) for a crash-corpus file."""
    src = path.read_text(encoding="utf-8")
    m = _ENTRY.match(src)
    assert m, f"{path.name} lacks an '// entry:' header"
    return src, code_to_aslt(src), m.group(1), parse_args_text(m.group(2))
