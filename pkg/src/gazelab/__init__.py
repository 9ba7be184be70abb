"""gazelab: human-AI collaborative analysis of eye-tracking tables.

Segmentation-driven LLM pattern mining, expert/literature co-scoring with
Cohen's Kappa, LSTM reconstruction-error anomaly detection, and a
question-difficulty prediction harness, reproducible end to end with a
deterministic mock model provider.
"""

__version__ = "0.1.0"
