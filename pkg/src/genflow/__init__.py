"""General flow toolkit.

3D point-trajectory flow labels from kinematic pose tracks, scale
normalization, training losses and ADE/FDE metrics, dataset rebalancing and
augmentation, weighted rigid alignment, and a closed-loop kinematic
manipulation simulator driven by a flow predictor.
"""

from .alignment import (WeightedCorrespondences, align, align_flow_steps, compose_chronological,
                        policy_weights, weighted_svd_align)
from .articulation import ArticulatedObject, JointModel, PoseTrack, load_scene
from .data import (AugmentConfig, ScaleClusters, hma_augment, kmeans_1d, qps_augment, rebalance_indices,
                   rebalance_weights, rebalanced_counts)
from .flow import (DeltaFlow, GeneralFlow, NormalizedFlow, NormMode, accumulate, compute_deltas,
                   denormalize, load_flow, normalize, save_flow)
from .geometry import (CameraModel, PointCloud, SE3Transform, back_project, crop_cube,
                       farthest_point_sample, project, se3_apply, voxel_downsample)
from .labels import ClipSpec, camera_shake_correction, extract_flow, sample_part_points, slice_clips
from .losses import (GaussianParams, LossWeights, ade, fde, kl_divergence, loss_acc, loss_scale, loss_traj,
                     metrics_over_samples, total_loss)
from .sim import (EpisodeResult, OracleFlowPredictor, PolicyConfig, ReplayFlowPredictor, Task, World,
                  apply_command, evaluate_success, oracle_predict, policy_step, render_scene, run_episode,
                  select_query_points)

__version__ = "0.1.0"
