"""JSON reports, terminal summaries and charts."""
