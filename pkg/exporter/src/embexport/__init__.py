"""Offline embedding-database exporter.

Produces EMBD files (and caption JSON) in exactly the formats the codec
package consumes, from either a pretrained sentence encoder or a
deterministic hashed-feature encoder for offline environments.
"""

from .encoders import EncoderUnavailable, HashedEncoder, get_encoder
from .export import export_caption_embeddings, export_label_embeddings

__version__ = "0.1.0"
