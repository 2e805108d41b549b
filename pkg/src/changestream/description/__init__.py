"""Captioning objectives on toy differentiable models."""

from .losses import (
    LAMBDA_ATTN,
    LAMBDA_RL,
    MU_ENTROPY,
    TRIPLET_MARGIN,
    discriminator_loss,
    expected_phase3_loss,
    generator_loss,
    image_only_statistic,
    no_change_statistic,
    phase3_loss,
    reinforce_gradient,
    triplet_loss,
    triplet_loss_and_grad,
)
from .models import (
    GeneratorOutput,
    ToyDiscriminator,
    ToyGenerator,
    ToyImageOnlyDetector,
    caption_space,
    entropy,
)
from .training import (
    ToyPairs,
    TrainConfig,
    TrainHistory,
    discriminator_accuracy,
    fit_discriminator,
    fit_generator,
    fit_image_only,
    image_only_stat_table,
    language_stat_table,
    make_toy_dataset,
    train_phases,
)
