"""Small hand-built corpus shared by the prompt snapshot tests."""

from conftest import make_component
from sitkg.kg_core import DEFAULT_VOCABULARY

TOOLS = {
    "cooking": "whisk", "cooking_with_bowls": "bowl", "pouring": "bottle", "wiping": "sponge", "cereals": "cereals",
    "hard_drive": "screwdriver", "free_hard_drive": "hard_drive", "hammering": "hammer", "sawing": "saw",
}


def train_components():
    out = []
    for take in (1, 2):
        for task in DEFAULT_VOCABULARY.parent_actions:
            out.append(make_component(task, take=take, right=[("approach", [TOOLS[task]]), ("lift", [TOOLS[task]]), ("retreat", [])]))
    return out


def query_component():
    return make_component("sawing", subject="subject_2", take=9, left=[("hold", ["wood"])], right=[("approach", ["saw"]), ("saw", ["saw"])])
