"""Density models and ratio parameterizations.

Two ratio models are provided: a closed-form Gaussian location family
(log-ratio linear in the sample, quadratic in the parameter) and a
multilayer ratio network with a sinusoidal stage-index embedding whose
gradients are derived by hand (reverse mode, no autodiff).
"""
import numpy as np

LEAKY_SLOPE = 0.2
SIN_EMB_DIM = 128


class GaussianLocationModel:
    """Unit-covariance Gaussian location family N(alpha, I) against N(0, I).

    The log density ratio admits the closed form
        log r_alpha(x) = alpha . x - ||alpha||^2 / 2,
    with parameter gradient x - alpha; the partition function is absorbed
    exactly, so there is no Monte-Carlo error in the model itself.
    """

    def __init__(self, mean):
        self.mean = np.asarray(mean, dtype=float)
        if self.mean.ndim != 1:
            raise ValueError("mean must be a 1-D vector")

    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def n_params(self):
        return self.mean.shape[0]

    def log_ratio(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(
                "dimension mismatch: model dim %d, input dim %d" % (self.dim, x.shape[-1]))
        return x @ self.mean - 0.5 * self.mean @ self.mean

    def grad_log_ratio(self, x):
        """d log r / d alpha = x - alpha, row-wise for a sample matrix."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(
                "dimension mismatch: model dim %d, input dim %d" % (self.dim, x.shape[-1]))
        return x - self.mean

    def weighted_param_grad(self, x, coeffs):
        """Return sum_i coeffs[i] * grad_alpha log r(x_i) in one pass."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        coeffs = np.asarray(coeffs, dtype=float)
        return coeffs @ (x - self.mean)

    def get_params(self):
        return self.mean.copy()

    def set_params(self, params):
        params = np.asarray(params, dtype=float)
        if params.shape != self.mean.shape:
            raise ValueError("parameter length mismatch")
        self.mean = params.copy()


def log_ratio_gaussian(model, x):
    """Closed-form log ratio alpha.x - ||alpha||^2/2 for a single point."""
    return float(model.log_ratio(np.asarray(x, dtype=float)))


def grad_logratio_gaussian(model, x):
    """Closed-form parameter gradient x - alpha for a single point."""
    return model.grad_log_ratio(np.asarray(x, dtype=float))


def sample_gaussian_location(mean, count, rng):
    """Draw `count` i.i.d. rows from N(mean, I)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    mean = np.asarray(mean, dtype=float)
    return mean + rng.standard_normal((count, mean.shape[0]))


def _leaky(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def _leaky_deriv(x):
    return np.where(x > 0, 1.0, LEAKY_SLOPE)


def sinusoidal_stage_embedding(stage, emb_dim=SIN_EMB_DIM):
    """Transformer-style sinusoidal embedding of an integer stage index.

    Half the dimensions carry sines, half cosines, over a geometric
    frequency ladder 10000^(-i / (emb_dim/2)).
    """
    half = emb_dim // 2
    freqs = np.power(10000.0, -np.arange(half) / half)
    angles = stage * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)])


class MlpRatioModel:
    """Multilayer log-ratio network with a stage-index embedding.

    Architecture (fixed): input embedding (affine, leaky ReLU, affine);
    sinusoidal stage embedding followed by (affine, leaky ReLU, affine);
    concatenation; affine to hidden width; N width-preserving residual
    blocks (leaky ReLU, affine, plus input skip); final leaky ReLU and
    affine map to a scalar. The output is the unnormalized log ratio
    f(z, stage); the partition function is absorbed into the estimate.
    """

    def __init__(self, input_dim, hidden_width=128, num_resblocks=3,
                 num_stages=4, seed=0):
        if input_dim < 1 or hidden_width < 1 or num_resblocks < 1 or num_stages < 1:
            raise ValueError("all size arguments must be positive")
        self.input_dim = input_dim
        self.hidden_width = hidden_width
        self.num_resblocks = num_resblocks
        self.num_stages = num_stages
        self.leaky_slope = LEAKY_SLOPE

        W = hidden_width
        shapes = [
            ("W_in1", (input_dim, W)), ("b_in1", (W,)),
            ("W_in2", (W, W)), ("b_in2", (W,)),
            ("W_st1", (SIN_EMB_DIM, W)), ("b_st1", (W,)),
            ("W_st2", (W, W)), ("b_st2", (W,)),
            ("W_cat", (2 * W, W)), ("b_cat", (W,)),
        ]
        for j in range(num_resblocks):
            shapes.append(("W_res%d" % j, (W, W)))
            shapes.append(("b_res%d" % j, (W,)))
        shapes.append(("W_out", (W, 1)))
        shapes.append(("b_out", (1,)))

        self._shapes = shapes
        self._slices = {}
        offset = 0
        for name, shape in shapes:
            size = int(np.prod(shape))
            self._slices[name] = (slice(offset, offset + size), shape)
            offset += size
        self.parameters = np.zeros(offset)
        self._init_params(seed)

    @property
    def n_params(self):
        return self.parameters.shape[0]

    def _init_params(self, seed):
        # Kaiming-style uniform fan-in scaling for weights and biases,
        # mirroring the usual affine-layer default.
        rng = np.random.default_rng(seed)
        for name, shape in self._shapes:
            sl, _ = self._slices[name]
            if name.startswith("W"):
                fan_in = shape[0]
            else:
                # bias bound follows the fan-in of its weight matrix
                wname = "W" + name[1:]
                fan_in = self._slices[wname][1][0]
            bound = 1.0 / np.sqrt(fan_in)
            self.parameters[sl] = rng.uniform(-bound, bound, int(np.prod(shape)))

    def _p(self, name):
        sl, shape = self._slices[name]
        return self.parameters[sl].reshape(shape)

    def get_params(self):
        return self.parameters.copy()

    def set_params(self, params):
        params = np.asarray(params, dtype=float)
        if params.shape != self.parameters.shape:
            raise ValueError("parameter length mismatch")
        self.parameters = params.copy()

    def _check_stage(self, stage):
        if not 0 <= stage < self.num_stages:
            raise ValueError(
                "stage %d out of range [0, %d)" % (stage, self.num_stages))

    def _forward_cache(self, Z, stage):
        """Forward pass over a batch, keeping activations for backprop."""
        self._check_stage(stage)
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.input_dim:
            raise ValueError(
                "dimension mismatch: expected input dim %d, got %d"
                % (self.input_dim, Z.shape[1]))
        c = {"Z": Z}
        c["A1"] = Z @ self._p("W_in1") + self._p("b_in1")
        c["H1"] = _leaky(c["A1"])
        c["EX"] = c["H1"] @ self._p("W_in2") + self._p("b_in2")

        s = sinusoidal_stage_embedding(stage)
        c["s"] = s
        c["B1"] = s @ self._p("W_st1") + self._p("b_st1")
        c["G1"] = _leaky(c["B1"])
        c["EK"] = c["G1"] @ self._p("W_st2") + self._p("b_st2")

        C = np.concatenate([c["EX"], np.broadcast_to(c["EK"], c["EX"].shape)], axis=1)
        c["C"] = C
        H = C @ self._p("W_cat") + self._p("b_cat")
        c["res_in"] = []
        for j in range(self.num_resblocks):
            c["res_in"].append(H)
            H = H + _leaky(H) @ self._p("W_res%d" % j) + self._p("b_res%d" % j)
        c["Hfin"] = H
        c["F"] = _leaky(H)
        c["out"] = (c["F"] @ self._p("W_out") + self._p("b_out"))[:, 0]
        return c

    def forward(self, Z, stage):
        """Evaluate f(z, stage) for a batch of rows (or a single vector)."""
        single = np.asarray(Z).ndim == 1
        out = self._forward_cache(Z, stage)["out"]
        return float(out[0]) if single else out

    def _backward(self, c, dout, want_input_grad=False):
        """Reverse pass; dout holds per-sample output coefficients.

        Returns (flat parameter gradient of sum_i dout_i * f(z_i),
        gradient w.r.t. inputs or None).
        """
        g = np.zeros_like(self.parameters)

        def acc(name, val):
            sl, _ = self._slices[name]
            g[sl] += val.ravel()

        F = c["F"]
        acc("W_out", F.T @ dout[:, None])
        acc("b_out", np.array([dout.sum()]))
        dF = dout[:, None] * self._p("W_out")[:, 0]
        dH = dF * _leaky_deriv(c["Hfin"])

        for j in reversed(range(self.num_resblocks)):
            Hin = c["res_in"][j]
            R = _leaky(Hin)
            acc("W_res%d" % j, R.T @ dH)
            acc("b_res%d" % j, dH.sum(axis=0))
            dH = dH + (dH @ self._p("W_res%d" % j).T) * _leaky_deriv(Hin)

        acc("W_cat", c["C"].T @ dH)
        acc("b_cat", dH.sum(axis=0))
        dC = dH @ self._p("W_cat").T
        W = self.hidden_width
        dEX = dC[:, :W]
        dEK = dC[:, W:].sum(axis=0)

        acc("W_in2", c["H1"].T @ dEX)
        acc("b_in2", dEX.sum(axis=0))
        dH1 = dEX @ self._p("W_in2").T
        dA1 = dH1 * _leaky_deriv(c["A1"])
        acc("W_in1", c["Z"].T @ dA1)
        acc("b_in1", dA1.sum(axis=0))
        dZ = dA1 @ self._p("W_in1").T if want_input_grad else None

        acc("W_st2", np.outer(c["G1"], dEK))
        acc("b_st2", dEK)
        dG1 = self._p("W_st2") @ dEK
        dB1 = dG1 * _leaky_deriv(c["B1"])
        acc("W_st1", np.outer(c["s"], dB1))
        acc("b_st1", dB1)
        return g, dZ

    def param_grad(self, z, stage):
        """Gradient of f(z, stage) w.r.t. the flat parameter vector."""
        c = self._forward_cache(z, stage)
        g, _ = self._backward(c, np.ones(c["out"].shape[0]))
        return g

    def weighted_param_grad(self, Z, coeffs, stage):
        """Return sum_i coeffs[i] * df(z_i, stage)/dparams in one pass."""
        c = self._forward_cache(Z, stage)
        g, _ = self._backward(c, np.asarray(coeffs, dtype=float))
        return g

    def input_grad(self, Z, stage):
        """Gradient of f w.r.t. each input row (used by samplers)."""
        single = np.asarray(Z).ndim == 1
        c = self._forward_cache(Z, stage)
        _, dZ = self._backward(c, np.ones(c["out"].shape[0]), want_input_grad=True)
        return dZ[0] if single else dZ


class StageRatioModel:
    """A ratio-model view of one stage of a multistage network.

    Fixes the stage index so the wrapped network satisfies the same
    log_ratio / weighted_param_grad contract as the closed-form family.
    """

    def __init__(self, mlp, stage):
        mlp._check_stage(stage)
        self.mlp = mlp
        self.stage = stage

    @property
    def n_params(self):
        return self.mlp.n_params

    def log_ratio(self, x):
        return self.mlp.forward(x, self.stage)

    def weighted_param_grad(self, x, coeffs):
        return self.mlp.weighted_param_grad(x, coeffs, self.stage)

    def get_params(self):
        return self.mlp.get_params()

    def set_params(self, params):
        self.mlp.set_params(params)


def mlp_forward(model, z, stage):
    return model.forward(z, stage)


def mlp_param_grad(model, z, stage):
    return model.param_grad(z, stage)


class AdamState:
    """Adaptive-moment estimation with bias correction.

    Tracks first/second moments for one flat parameter vector; a
    `maximize` step ascends instead of descending.
    """

    def __init__(self, n_params, learning_rate=1e-3, beta1=0.9, beta2=0.999,
                 epsilon=1e-8):
        self.first_moment = np.zeros(n_params)
        self.second_moment = np.zeros(n_params)
        self.step_count = 0
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon


def adam_step(state, params, grad, maximize=False):
    """One Adam update; returns new parameters (state mutated in place)."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape or params.shape != state.first_moment.shape:
        raise ValueError("parameter/gradient/state length mismatch")
    g = -grad if maximize else grad
    state.step_count += 1
    t = state.step_count
    state.first_moment = state.beta1 * state.first_moment + (1 - state.beta1) * g
    state.second_moment = state.beta2 * state.second_moment + (1 - state.beta2) * g * g
    m_hat = state.first_moment / (1 - state.beta1 ** t)
    v_hat = state.second_moment / (1 - state.beta2 ** t)
    return params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
