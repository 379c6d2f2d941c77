import sys
from pathlib import Path

root = Path(__file__).resolve().parents[2]
# Development layout: package sources at the repo root, extension in build/.
sys.path.insert(0, str(root))
sys.path.insert(0, str(root / "build"))
