"""Multi-source LSTM user embeddings for Wikipedia vandal detection.

Per-user edit histories are split into three aspect streams (page title,
page categories, revert status). Each stream runs through its own LSTM, an
attention layer fuses the final hidden states into a user embedding, and a
softmax classifier scores the user. The same model runs edit-by-edit for
early detection.
"""
__version__ = "0.1.0"

from .analysis import UserEmbedding, cosine_neighbors, dbscan, embed_users, export_embeddings
from .detection import DetectionConfig, StreamState, early_stats, evaluate, predict_user, stream_step
from .embeddings import WordVectorStore, embed_text, load_word_vectors, tokenize
from .ingestion import (AspectSequences, EditRecord, UserSequence, build_aspect_sequences,
                        chronological_split, filter_meta_edits, gen_synthetic,
                        group_into_user_sequences, parse_edit_log)
from .model import ModelParams, backward_user, forward_user
from .training import TrainConfig, load_checkpoint, save_checkpoint, train
