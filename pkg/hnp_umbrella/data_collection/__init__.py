"""Dataset ingestion and patient-matrix featurization."""
