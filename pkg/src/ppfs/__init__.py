"""Privacy-preserving rough set feature selection over partitioned data."""
