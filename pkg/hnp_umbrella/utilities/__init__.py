"""Configuration, errors, random streams and binomial tail math."""
