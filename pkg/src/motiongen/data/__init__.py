from .captions import (
    PAD_ID,
    VOCAB_VERSION,
    VOCABULARY,
    caption_for_action,
    decode_caption,
    encode_caption,
    vocab_size,
)
from .oracle import classify_trajectory, measure_trajectory
from .sprites import (
    ACTIONS,
    COLORS,
    SHAPES,
    SIZES,
    CaptionedClip,
    Sprite,
    SpriteAction,
    SpriteScene,
    generate_scene,
    generate_transfer_pair,
    render_clip,
    scene_trajectory,
)

__all__ = [
    "ACTIONS", "COLORS", "SHAPES", "SIZES",
    "CaptionedClip", "Sprite", "SpriteAction", "SpriteScene",
    "PAD_ID", "VOCAB_VERSION", "VOCABULARY",
    "caption_for_action", "decode_caption", "encode_caption", "vocab_size",
    "classify_trajectory", "measure_trajectory",
    "generate_scene", "generate_transfer_pair", "render_clip", "scene_trajectory",
]
