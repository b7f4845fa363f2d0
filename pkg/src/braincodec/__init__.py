"""Scalable three-layer semantic codec for visually-evoked brain signals.

The package trains learned transform codecs with factorized entropy models,
packs their payloads into a sliceable layered bitstream, classifies signals
by embedding retrieval, and evaluates rate / accuracy / text / image metrics
under simulated bandwidth constraints.
"""

from .codec import (QuantizedCode, SemanticFeature, Thumbnail, LayerCodec,
                    build_label_codec, build_caption_codec, build_thumbnail_codec,
                    layer_encode, layer_decode, distortion, rd_loss)
from .container import (LAYER_LABEL, LAYER_CAPTION, LAYER_THUMBNAIL,
                        pack, unpack, slice_stream, payload_bits, compute_bps)
from .dataio import (BrainSignal, DatasetManifest, SyntheticSpec, preprocess,
                     synthesize_dataset, split_dataset, save_dataset, load_dataset)
from .entropy import (FactorizedDensity, PmfTable, quantize, add_uniform_noise,
                      likelihood, estimate_rate_bits, build_pmf_table)
from .errors import CodecError, FormatError
from .linksim import ChannelModel, DeliveryReport, simulate
from .metrics import (top1_accuracy, confusion_matrix, bleu_n, rouge1, ssim,
                      fuse_prompt, rate_accuracy_sweep, MetricReport)
from .checkpoint import Checkpoint, save_checkpoint, load_checkpoint
from .pipeline import CodecStack, encode_record, encode_records, decode_stream
from .rangecoder import range_encode, range_decode
from .retrieval import (EmbeddingDatabase, ClassPrediction, classify,
                        save_embedding_db, load_embedding_db)
from .trainer import TrainConfig, train_layer, validate

__version__ = "0.1.0"
