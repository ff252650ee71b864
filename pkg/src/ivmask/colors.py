"""RGB anchors for colour words shared by the scene generator and feature extractors."""
from typing import Dict, Tuple

COLOR_LEXICON: Dict[str, Tuple[int, int, int]] = {
    "red": (255, 25, 25),
    "green": (25, 255, 25),
    "blue": (25, 25, 255),
    "yellow": (255, 255, 25),
    "cyan": (25, 255, 255),
    "magenta": (255, 25, 255),
    "white": (255, 255, 255),
    "black": (0, 0, 0),
    "gray": (128, 128, 128),
    "grey": (128, 128, 128),
    "orange": (255, 140, 0),
    "purple": (128, 0, 128),
    "pink": (255, 160, 200),
    "brown": (140, 80, 20),
}
