"""Reference problems shared by the unit and acceptance tests."""
import numpy as np

from rtw.ppo import PpoConfig
from rtw.teacher import Teacher, TeacherRecord


def synthetic_teacher(seed, iterations=300, random_weights=False):
    """Teacher trained against a stand-in student whose primary reward is 1 - |w_1 - 0.9|.

    Returns the final deterministic weights and the mean reward over the last 50 steps.
    """
    rng = np.random.default_rng(seed)
    teacher = Teacher(3, 5, primary_scale=1.0, episodes_per_update=10, rng=rng,
                      config=PpoConfig(learning_rate=3e-4, epochs=10, minibatch_size=10, gamma=0.5))
    rewards = []
    for _ in range(iterations):
        d = teacher.act(rng)
        w = rng.random(3) if random_weights else d.weights
        r = 1.0 - abs(w[0] - 0.9)
        rewards.append(r)
        teacher.observe(d, r, TeacherRecord(w, r, np.zeros(3)), rng)
    return teacher.act(rng, deterministic=True).weights, float(np.mean(rewards[-50:]))
