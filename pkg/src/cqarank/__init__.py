"""Answer ranking for community Q&A.

Candidate answers are scored against a question by a bidirectional LSTM text
encoder, a word-by-word interaction matrix with max pooling, and an attention
step whose answer side is modulated by three factorized community features of
the answerer (expertise, follower authority, disease-graph mentions). Training
is pairwise hinge over sampled (better, worse) answer pairs. Everything is
plain numpy with hand-written gradients.
"""

__version__ = "0.1.0"
