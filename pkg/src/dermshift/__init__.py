"""dermshift: metadata-driven dataset grouping and domain-shift
quantification for dermoscopic image archives.

The toolkit builds domain-shifted datasets from image catalogs by
metadata rules, measures the shift between them with bootstrapped
distribution metrics (Jensen-Shannon divergence over pixel histograms,
cosine similarity over embeddings), projects embeddings with exact
t-SNE, and relates the metrics to discriminator performance.
"""

__version__ = "0.1.0"
