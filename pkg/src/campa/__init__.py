"""Static cost analysis of message-passing protocols described as cost-annotated global types."""

__version__ = "0.1.0"
