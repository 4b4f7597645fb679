import sys
from pathlib import Path

# make `tests.support` importable as plain `support` regardless of cwd
sys.path.insert(0, str(Path(__file__).parent))
