#include "dislab/cgvae.hpp"

#include "dislab/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace dislab {

using json = nlohmann::ordered_json;

namespace {
constexpr double LOG_2PI = 1.8378770664093454836;
constexpr const char* CHECKPOINT_FORMAT = "dislab-checkpoint-v1";
} // namespace

const char* penalty_kind_name(PenaltyKind k) {
    switch (k) {
        case PenaltyKind::l1: return "l1";
        case PenaltyKind::l2: return "l2";
        case PenaltyKind::finite_diff: return "finite_diff";
    }
    return "?";
}

PenaltyKind penalty_kind_from_name(const std::string& s) {
    if (s == "l1") return PenaltyKind::l1;
    if (s == "l2") return PenaltyKind::l2;
    if (s == "finite_diff" || s == "fd") return PenaltyKind::finite_diff;
    fail(ErrorCode::invalid_argument, "unknown penalty kind '" + s + "'");
}

void TrainConfig::validate() const {
    if (alpha < 0.0 || beta < 0.0)
        fail(ErrorCode::invalid_argument, "TrainConfig: alpha and beta must be >= 0");
    if (batch < 1) fail(ErrorCode::invalid_argument, "TrainConfig: batch must be >= 1");
    if (lr <= 0.0) fail(ErrorCode::invalid_argument, "TrainConfig: lr must be > 0");
    if (fd_step <= 0.0) fail(ErrorCode::invalid_argument, "TrainConfig: fd_step must be > 0");
}

CgvaeModel CgvaeModel::init(const CgvaeArch& arch, std::uint64_t seed) {
    CgvaeModel m;
    m.arch = arch;
    Rng rng(Rng::substream(seed, 301));
    m.encoder = Mlp::create(m.params, "encoder", arch.n_obs, 2 * arch.n_latent, arch.hidden,
                            arch.mlp_layers, rng, arch.leaky_slope);
    m.decoder = Mlp::create(m.params, "decoder", arch.n_latent, arch.n_obs, arch.hidden,
                            arch.mlp_layers, rng, arch.leaky_slope);
    m.flow = DeepSigmoidFlow::create(m.params, "flow", arch.n_domains, arch.n_latent,
                                     arch.flow_units, rng);
    if (arch.use_mask) m.mask = LatentMask::create(m.params, "mask", arch.n_latent);
    m.x_mean = Tensor::zeros({arch.n_obs});
    m.x_scale = Tensor::full({arch.n_obs}, 1.0);
    return m;
}

EncodeVars encode_graph(const CgvaeModel& model, Tape& tape, const std::vector<Var>& params,
                        Var x_raw, const Tensor& eta) {
    const Tensor& xv = tape.val(x_raw);
    if (!xv.all_finite()) fail(ErrorCode::numeric, "encode: non-finite input batch");
    EncodeVars ev;
    ev.x_std = tape.div(tape.sub(x_raw, tape.constant(model.x_mean)),
                        tape.constant(model.x_scale));
    Var enc_out = model.encoder.forward(tape, params, ev.x_std);
    std::size_t n = model.arch.n_latent;
    ev.mu = tape.slice(enc_out, 1, 0, n);
    ev.logvar = tape.clamp(tape.slice(enc_out, 1, n, n), -10.0, 10.0);
    ev.sigma = tape.exp(tape.mul_scalar(ev.logvar, 0.5));
    ev.zhat = tape.add(ev.mu, tape.mul(ev.sigma, tape.constant(eta)));
    return ev;
}

ElboVars elbo_graph(const CgvaeModel& model, Tape& tape, const std::vector<Var>& params,
                    const Tensor& x_raw, const std::vector<std::uint32_t>& u, const Tensor& eta) {
    if (x_raw.rank() != 2 || x_raw.dim(0) == 0)
        fail(ErrorCode::invalid_argument, "elbo: batch must be a nonempty [N, n_obs] matrix");
    if (x_raw.dim(0) != u.size() || !eta.same_shape(Tensor::zeros({x_raw.dim(0),
                                                                   model.arch.n_latent})))
        fail(ErrorCode::shape_mismatch, "elbo: batch/domain/noise sizes disagree");

    ElboVars ev;
    Var x = tape.constant(x_raw);
    ev.enc = encode_graph(model, tape, params, x, eta);

    // log q(zhat | x): diagonal Gaussian at (mu, sigma)
    Var diff = tape.sub(ev.enc.zhat, ev.enc.mu);
    Var quad = tape.div(tape.mul(diff, diff),
                        tape.mul_scalar(tape.mul(ev.enc.sigma, ev.enc.sigma), 2.0));
    Var inner = tape.add(tape.mul_scalar(ev.enc.logvar, 0.5), quad);
    ev.logq_rows = tape.add_scalar(
        tape.neg(tape.sum_axis(inner, 1)),
        -0.5 * LOG_2PI * static_cast<double>(model.arch.n_latent));

    ev.logp_rows = model.flow.log_prior(tape, params, ev.enc.zhat, u);
    ev.l_kl = tape.mean(tape.sub(ev.logq_rows, ev.logp_rows));

    ev.z_dec = model.arch.use_mask
                   ? model.mask.apply(tape, params, model.flow, ev.enc.zhat, u)
                   : ev.enc.zhat;
    ev.dec = model.decoder.forward_trace(tape, params, ev.z_dec);

    Var resid = tape.sub(ev.enc.x_std, ev.dec.out);
    ev.l_rec = tape.neg(tape.mean(tape.sum_axis(tape.mul(resid, resid), 1)));
    return ev;
}

namespace {

Tensor unit_column_batch(std::size_t rows, std::size_t n, std::size_t j) {
    Tensor t = Tensor::zeros({rows, n});
    for (std::size_t r = 0; r < rows; ++r) t.at(r, j) = 1.0;
    return t;
}

} // namespace

Var sparse_penalty_exact_graph(const CgvaeModel& model, Tape& tape,
                               const std::vector<Var>& params, const Mlp::Trace& dec_trace,
                               bool squared) {
    std::size_t n = model.arch.n_latent;
    std::size_t rows = tape.val(dec_trace.out).dim(0);
    Var acc;
    for (std::size_t j = 0; j < n; ++j) {
        Var t0 = tape.constant(unit_column_batch(rows, n, j));
        Var col = model.decoder.tangent(tape, params, dec_trace, t0);
        Var mass = squared ? tape.sum(tape.mul(col, col)) : tape.sum(tape.abs(col));
        acc = j == 0 ? mass : tape.add(acc, mass);
    }
    return tape.mul_scalar(acc, 1.0 / static_cast<double>(rows));
}

Var sparse_penalty_fd_graph(const CgvaeModel& model, Tape& tape, const std::vector<Var>& params,
                            Var z_dec, Var base_out, double step) {
    if (step <= 0.0) fail(ErrorCode::invalid_argument, "sparse_penalty_fd: step must be > 0");
    std::size_t n = model.arch.n_latent;
    std::size_t rows = tape.val(z_dec).dim(0);
    Var acc;
    for (std::size_t j = 0; j < n; ++j) {
        Tensor e = unit_column_batch(rows, n, j);
        for (std::size_t i = 0; i < e.size(); ++i) e[i] *= step;
        Var zj = tape.add(z_dec, tape.constant(e));
        Var out_j = model.decoder.forward(tape, params, zj);
        Var quot = tape.mul_scalar(tape.sub(out_j, base_out), 1.0 / step);
        acc = j == 0 ? quot : tape.add(acc, quot);
    }
    // L1 of the summed difference quotients, per row, batch-averaged.
    return tape.mul_scalar(tape.sum(tape.abs(acc)), 1.0 / static_cast<double>(rows));
}

Tensor encode_mean(const CgvaeModel& model, const Tensor& x_raw) {
    Tape tape;
    auto params = bind_params(tape, model.params, false);
    Tensor eta = Tensor::zeros({x_raw.dim(0), model.arch.n_latent});
    EncodeVars ev = encode_graph(model, tape, params, tape.constant(x_raw), eta);
    return tape.val(ev.mu);
}

std::pair<Tensor, Tensor> encode_params(const CgvaeModel& model, const Tensor& x_raw) {
    Tape tape;
    auto params = bind_params(tape, model.params, false);
    Tensor eta = Tensor::zeros({x_raw.dim(0), model.arch.n_latent});
    EncodeVars ev = encode_graph(model, tape, params, tape.constant(x_raw), eta);
    return {tape.val(ev.mu), tape.val(ev.logvar)};
}

Tensor decode(const CgvaeModel& model, const Tensor& z) {
    Tape tape;
    auto params = bind_params(tape, model.params, false);
    Var out = model.decoder.forward(tape, params, tape.constant(z));
    Tensor x = tape.val(out);
    for (std::size_t r = 0; r < x.dim(0); ++r)
        for (std::size_t j = 0; j < x.dim(1); ++j)
            x.at(r, j) = x.at(r, j) * model.x_scale[j] + model.x_mean[j];
    return x;
}

LossBreakdown elbo_terms(const CgvaeModel& model, const Tensor& x_raw,
                         const std::vector<std::uint32_t>& u, std::uint64_t noise_seed) {
    Rng rng(noise_seed);
    Tensor eta = rng.normal_tensor({x_raw.dim(0), model.arch.n_latent});
    Tape tape;
    auto params = bind_params(tape, model.params, false);
    ElboVars ev = elbo_graph(model, tape, params, x_raw, u, eta);
    LossBreakdown out;
    out.l_rec = tape.val(ev.l_rec)[0];
    out.l_kl = tape.val(ev.l_kl)[0];
    out.total = -out.l_rec + out.l_kl;
    return out;
}

Tensor decoder_jacobian_mean_abs(const CgvaeModel& model, const Tensor& z_points) {
    Tape tape;
    auto params = bind_params(tape, model.params, false);
    Mlp::Trace trace = model.decoder.forward_trace(tape, params, tape.constant(z_points));
    std::size_t n = model.arch.n_latent, n_obs = model.arch.n_obs;
    std::size_t rows = z_points.dim(0);
    Tensor J = Tensor::zeros({n_obs, n});
    for (std::size_t j = 0; j < n; ++j) {
        Var col = model.decoder.tangent(tape, params, trace,
                                        tape.constant(unit_column_batch(rows, n, j)));
        const Tensor& cv = tape.val(col);
        for (std::size_t i = 0; i < n_obs; ++i) {
            double acc = 0.0;
            for (std::size_t r = 0; r < rows; ++r) acc += std::fabs(cv.at(r, i));
            J.at(i, j) = acc / static_cast<double>(rows);
        }
    }
    return J;
}

TrainResult train(CgvaeModel& model, const DatasetBundle& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.n_rows() == 0 || data.train_idx.empty())
        fail(ErrorCode::invalid_argument, "train: empty dataset");
    if (data.x.dim(1) != model.arch.n_obs)
        fail(ErrorCode::shape_mismatch,
             "train: dataset has " + std::to_string(data.x.dim(1)) + " observed dims, model has " +
                 std::to_string(model.arch.n_obs));
    for (std::uint32_t d : data.u)
        if (d >= model.arch.n_domains)
            fail(ErrorCode::invalid_argument,
                 "train: dataset domain " + std::to_string(d) + " exceeds model domain count " +
                     std::to_string(model.arch.n_domains));

    // Standardizer from the training split.
    std::size_t n_obs = model.arch.n_obs;
    Tensor xtr = data.rows(data.x, data.train_idx);
    for (std::size_t j = 0; j < n_obs; ++j) {
        double mean = 0.0;
        for (std::size_t r = 0; r < xtr.dim(0); ++r) mean += xtr.at(r, j);
        mean /= static_cast<double>(xtr.dim(0));
        double var = 0.0;
        for (std::size_t r = 0; r < xtr.dim(0); ++r) {
            double d = xtr.at(r, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(xtr.dim(0));
        model.x_mean[j] = mean;
        model.x_scale[j] = std::max(std::sqrt(var), 1e-8);
    }
    model.dataset_digest = dataset_digest(data);

    AdamWConfig acfg;
    acfg.lr = cfg.lr;
    acfg.beta1 = cfg.adam_beta1;
    acfg.beta2 = cfg.adam_beta2;
    acfg.eps = cfg.adam_eps;
    acfg.weight_decay = cfg.weight_decay;
    AdamW opt(acfg);

    Rng shuffle_rng(Rng::substream(cfg.seed, 101));
    Rng noise_rng(Rng::substream(cfg.seed, 102));
    const double alpha = cfg.effective_alpha();

    TrainResult result;
    std::vector<std::uint32_t> order = data.train_idx;
    std::size_t n_latent = model.arch.n_latent;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        LossBreakdown ep{};
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::size_t B = std::min(cfg.batch, order.size() - start);
            Tensor xb = Tensor::zeros({B, n_obs});
            std::vector<std::uint32_t> ub(B);
            for (std::size_t r = 0; r < B; ++r) {
                std::uint32_t row = order[start + r];
                std::copy(data.x.data() + row * n_obs, data.x.data() + (row + 1) * n_obs,
                          xb.data() + r * n_obs);
                ub[r] = data.u[row];
            }
            Tensor eta = noise_rng.normal_tensor({B, n_latent});

            Tape tape;
            auto params = bind_params(tape, model.params, true);
            ElboVars ev = elbo_graph(model, tape, params, xb, ub, eta);
            Var total = tape.neg(ev.l_rec);
            double ls_val = 0.0;
            if (alpha > 0.0) {
                Var ls;
                switch (cfg.penalty_kind) {
                    case PenaltyKind::l1:
                        ls = sparse_penalty_exact_graph(model, tape, params, ev.dec, false);
                        break;
                    case PenaltyKind::l2:
                        ls = sparse_penalty_exact_graph(model, tape, params, ev.dec, true);
                        break;
                    case PenaltyKind::finite_diff:
                        ls = sparse_penalty_fd_graph(model, tape, params, ev.z_dec, ev.dec.out,
                                                     cfg.fd_step);
                        break;
                }
                ls_val = tape.val(ls)[0];
                total = tape.add(total, tape.mul_scalar(ls, alpha));
            }
            total = tape.add(total, tape.mul_scalar(ev.l_kl, cfg.beta));
            double lm_val = 0.0;
            if (model.arch.use_mask) {
                Var lm = model.mask.l1(tape, params);
                lm_val = tape.val(lm)[0];
                total = tape.add(total, tape.mul_scalar(lm, cfg.gamma_mask));
            }
            double total_val = tape.val(total)[0];
            if (!std::isfinite(total_val))
                fail(ErrorCode::numeric, "train: diverged at epoch " + std::to_string(epoch) +
                                             ", batch " + std::to_string(start / cfg.batch) +
                                             " (non-finite loss)");

            Grads grads = tape.backward(total);
            std::vector<Tensor> glist;
            glist.reserve(params.size());
            for (std::size_t p = 0; p < params.size(); ++p)
                glist.push_back(grads.has(params[p]) ? grads.at(params[p])
                                                     : Tensor::zeros(model.params[p].shape()));
            opt.step(model.params.values, glist, model.params.names);

            double w = static_cast<double>(B);
            ep.l_rec += w * tape.val(ev.l_rec)[0];
            ep.l_kl += w * tape.val(ev.l_kl)[0];
            ep.l_s += w * ls_val;
            ep.l_m += w * lm_val;
            ep.total += w * total_val;
            seen += B;
        }
        double inv = 1.0 / static_cast<double>(seen);
        ep.l_rec *= inv;
        ep.l_kl *= inv;
        ep.l_s *= inv;
        ep.l_m *= inv;
        ep.total *= inv;
        result.history.push_back(ep);
    }
    return result;
}

void save_loss_history(const TrainResult& result, const std::filesystem::path& csv_path) {
    std::string out = "epoch,l_rec,l_kl,l_s,l_m,total\n";
    for (std::size_t e = 0; e < result.history.size(); ++e) {
        const LossBreakdown& l = result.history[e];
        out += std::to_string(e) + "," + format_double(l.l_rec) + "," + format_double(l.l_kl) +
               "," + format_double(l.l_s) + "," + format_double(l.l_m) + "," +
               format_double(l.total) + "\n";
    }
    write_text_file(csv_path, out);
}

void checkpoint_save(const CgvaeModel& model, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = CHECKPOINT_FORMAT;
    json arch;
    arch["n_obs"] = model.arch.n_obs;
    arch["n_latent"] = model.arch.n_latent;
    arch["n_domains"] = model.arch.n_domains;
    arch["hidden"] = model.arch.hidden;
    arch["mlp_layers"] = model.arch.mlp_layers;
    arch["flow_units"] = model.arch.flow_units;
    arch["leaky_slope"] = model.arch.leaky_slope;
    arch["use_mask"] = model.arch.use_mask;
    manifest["arch"] = std::move(arch);
    manifest["dataset_digest"] = hex64(model.dataset_digest);

    std::vector<unsigned char> blob;
    json plist = json::array();
    for (std::size_t p = 0; p < model.params.size(); ++p) {
        const Tensor& t = model.params[p];
        plist.push_back({{"name", model.params.names[p]}, {"shape", t.shape()}});
        append_f64le(blob, t.data(), t.size());
    }
    manifest["params"] = std::move(plist);
    json blist = json::array();
    for (const auto* buf : {&model.x_mean, &model.x_scale}) {
        append_f64le(blob, buf->data(), buf->size());
    }
    blist.push_back({{"name", "x_mean"}, {"shape", model.x_mean.shape()}});
    blist.push_back({{"name", "x_scale"}, {"shape", model.x_scale.shape()}});
    manifest["buffers"] = std::move(blist);
    manifest["blob_digest"] = hex64(fnv1a64(blob.data(), blob.size()));

    write_text_file(dir / "model.json", manifest.dump(2) + "\n");
    std::filesystem::path blob_path = dir / "params.f64le";
    std::ofstream out(blob_path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "checkpoint_save: cannot write " + blob_path.string());
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size()));
}

CgvaeModel checkpoint_load(const std::filesystem::path& dir) {
    json manifest;
    try {
        manifest = json::parse(read_text_file(dir / "model.json"));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::corrupt, "checkpoint_load: bad model.json in " + dir.string() + ": " +
                                     e.what());
    }
    if (manifest.value("format", "") != CHECKPOINT_FORMAT)
        fail(ErrorCode::corrupt, "checkpoint_load: version mismatch in " + dir.string() +
                                     " (expected " + CHECKPOINT_FORMAT + ")");
    CgvaeArch arch;
    CgvaeModel model;
    try {
        const json& a = manifest.at("arch");
        arch.n_obs = a.at("n_obs").get<std::size_t>();
        arch.n_latent = a.at("n_latent").get<std::size_t>();
        arch.n_domains = a.at("n_domains").get<std::size_t>();
        arch.hidden = a.at("hidden").get<std::size_t>();
        arch.mlp_layers = a.at("mlp_layers").get<std::size_t>();
        arch.flow_units = a.at("flow_units").get<std::size_t>();
        arch.leaky_slope = a.at("leaky_slope").get<double>();
        arch.use_mask = a.at("use_mask").get<bool>();
        model = CgvaeModel::init(arch, 0);
        model.dataset_digest = parse_hex64(manifest.at("dataset_digest").get<std::string>());

        const json& plist = manifest.at("params");
        if (plist.size() != model.params.size())
            fail(ErrorCode::corrupt, "checkpoint_load: parameter count mismatch");
        auto blob = read_f64le(dir / "params.f64le");
        std::vector<unsigned char> bytes;
        append_f64le(bytes, blob.data(), blob.size());
        if (manifest.at("blob_digest").get<std::string>() !=
            hex64(fnv1a64(bytes.data(), bytes.size())))
            fail(ErrorCode::corrupt, "checkpoint_load: digest mismatch in " + dir.string());

        std::size_t off = 0;
        for (std::size_t p = 0; p < model.params.size(); ++p) {
            if (plist[p].at("name").get<std::string>() != model.params.names[p])
                fail(ErrorCode::corrupt, "checkpoint_load: parameter order mismatch at index " +
                                             std::to_string(p));
            Shape shape = plist[p].at("shape").get<Shape>();
            std::size_t n = shape_numel(shape);
            if (shape != model.params[p].shape() || off + n > blob.size())
                fail(ErrorCode::corrupt, "checkpoint_load: truncated or misshapen blob for " +
                                             model.params.names[p]);
            model.params[p] =
                Tensor::from(shape, std::vector<double>(blob.begin() + off, blob.begin() + off + n));
            off += n;
        }
        for (Tensor* buf : {&model.x_mean, &model.x_scale}) {
            std::size_t n = buf->size();
            if (off + n > blob.size())
                fail(ErrorCode::corrupt, "checkpoint_load: truncated buffer section");
            *buf = Tensor::from(buf->shape(),
                                std::vector<double>(blob.begin() + off, blob.begin() + off + n));
            off += n;
        }
        if (off != blob.size())
            fail(ErrorCode::corrupt, "checkpoint_load: blob has trailing data");
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::corrupt, "checkpoint_load: malformed model.json in " + dir.string() +
                                     ": " + e.what());
    }
    return model;
}

} // namespace dislab
