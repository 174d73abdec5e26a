"""Rewrite the golden prompt files after an intentional prompt change: ``python3 tests/update_goldens.py``."""

from test_acceptance import GOLDEN, golden_prompt

if __name__ == "__main__":
    GOLDEN.mkdir(exist_ok=True)
    for task in ("fire", "flood", "wind"):
        path = GOLDEN / f"prompt_{task}.txt"
        path.write_text(golden_prompt(task), encoding="utf-8")
        print("wrote", path)
