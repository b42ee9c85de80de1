"""medseg2d: promptable 2D medical image segmentation at desk scale.

Subpackages: data_engine (curation rules), prompts (interaction simulation),
model (adapter ViT + prompt encoder + mask decoder), training (interactive
fine-tuning), evaluation (Dice protocols), service (session-based HTTP
inference), pipeline (disk I/O), synthetic (test data).
"""

__version__ = "0.1.0"
