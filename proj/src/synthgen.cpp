#include "dislab/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "dislab/rng.hpp"

namespace dislab {

using json = nlohmann::ordered_json;

MixingGraph MixingGraph::empty(std::size_t n_latent, std::size_t n_obs) {
    MixingGraph g;
    g.n_latent = n_latent;
    g.n_obs = n_obs;
    g.adjacency.assign(n_latent * n_obs, 0);
    return g;
}

MixingGraph MixingGraph::full(std::size_t n) {
    MixingGraph g = empty(n, n);
    std::fill(g.adjacency.begin(), g.adjacency.end(), 1);
    return g;
}

MixingGraph MixingGraph::identity(std::size_t n) {
    MixingGraph g = empty(n, n);
    for (std::size_t i = 0; i < n; ++i) g.set_edge(i, i);
    return g;
}

std::vector<std::size_t> MixingGraph::parents_of(std::size_t obs) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_latent; ++i)
        if (edge(i, obs)) out.push_back(i);
    return out;
}

std::vector<std::size_t> MixingGraph::parents_of_set(
    const std::vector<std::size_t>& obs_set) const {
    std::set<std::size_t> acc;
    for (std::size_t j : obs_set) {
        if (j >= n_obs)
            fail(ErrorCode::invalid_argument,
                 "parents_of_set: observation index " + std::to_string(j) + " out of range");
        for (std::size_t i = 0; i < n_latent; ++i)
            if (edge(i, j)) acc.insert(i);
    }
    return std::vector<std::size_t>(acc.begin(), acc.end());
}

std::vector<std::size_t> MixingGraph::children_of(std::size_t latent) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n_obs; ++j)
        if (edge(latent, j)) out.push_back(j);
    return out;
}

bool MixingGraph::fully_connected() const {
    return std::all_of(adjacency.begin(), adjacency.end(), [](std::uint8_t v) { return v != 0; });
}

void MixingGraph::validate() const {
    if (n_latent == 0 || n_obs == 0 || adjacency.size() != n_latent * n_obs)
        fail(ErrorCode::invalid_argument, "MixingGraph: inconsistent sizes");
    for (std::size_t j = 0; j < n_obs; ++j)
        if (parents_of(j).empty())
            fail(ErrorCode::invalid_argument,
                 "MixingGraph: observation " + std::to_string(j) + " has no parent");
    for (std::size_t i = 0; i < n_latent; ++i)
        if (children_of(i).empty())
            fail(ErrorCode::invalid_argument,
                 "MixingGraph: latent " + std::to_string(i) + " has no child");
}

std::uint64_t MixingSpec::digest() const {
    std::vector<unsigned char> buf;
    auto put_u64 = [&](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) buf.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xff));
    };
    put_u64(graph.n_latent);
    put_u64(graph.n_obs);
    put_u64(depth);
    put_u64(seed);
    append_f64le(buf, &slope, 1);
    buf.insert(buf.end(), graph.adjacency.begin(), graph.adjacency.end());
    for (const Tensor& w : weights) append_f64le(buf, w.data(), w.size());
    for (const Tensor& b : biases) append_f64le(buf, b.data(), b.size());
    return fnv1a64(buf.data(), buf.size());
}

const std::vector<Tensor>& MixingSpec::layer_inverses() const {
    if (inv_cache_.size() != weights.size()) {
        inv_cache_.clear();
        for (const Tensor& w : weights) inv_cache_.push_back(inverse(w));
    }
    return inv_cache_;
}

void DomainPrior::validate() const {
    if (means.rank() != 2 || !means.same_shape(log_vars))
        fail(ErrorCode::invalid_argument, "DomainPrior: means/log_vars must be [D, n] and agree");
    if (!log_vars.all_finite())
        fail(ErrorCode::numeric, "DomainPrior: non-finite log variance");
}

namespace {

// Mask for layers after the first: intermediate j' may feed into j only when
// Pa(x_{j'}) is a subset of Pa(x_j), so composing layers never widens the
// support beyond the declared adjacency while the diagonal keeps it dense
// on the declared edges.
Tensor propagation_mask(const MixingGraph& g) {
    std::size_t n = g.n_obs;
    Tensor m = Tensor::zeros({n, n});
    for (std::size_t j = 0; j < n; ++j) {
        auto pj = g.parents_of(j);
        std::set<std::size_t> pset(pj.begin(), pj.end());
        for (std::size_t jp = 0; jp < n; ++jp) {
            auto pjp = g.parents_of(jp);
            bool subset = std::all_of(pjp.begin(), pjp.end(),
                                      [&](std::size_t i) { return pset.count(i) != 0; });
            if (subset) m.at(j, jp) = 1.0;
        }
    }
    return m;
}

Tensor first_layer_mask(const MixingGraph& g) {
    Tensor m = Tensor::zeros({g.n_obs, g.n_latent});
    for (std::size_t i = 0; i < g.n_latent; ++i)
        for (std::size_t j = 0; j < g.n_obs; ++j)
            if (g.edge(i, j)) m.at(j, i) = 1.0;
    return m;
}

// Edge weights are kept away from zero so every declared edge is a real one.
Tensor draw_masked_weights(const Tensor& mask, Rng& rng) {
    Tensor w = Tensor::zeros(mask.shape());
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (mask[i] == 0.0) continue;
        double mag = rng.uniform(0.4, 1.6);
        double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        w[i] = sign * mag;
    }
    return w;
}

} // namespace

MixingSpec build_mixing_spec(const MixingGraph& graph, std::size_t depth, std::uint64_t seed) {
    graph.validate();
    if (graph.n_latent != graph.n_obs)
        fail(ErrorCode::invalid_argument,
             "build_mixing_spec: invertible mixers need n_latent == n_obs, got " +
                 std::to_string(graph.n_latent) + " vs " + std::to_string(graph.n_obs));
    if (depth < 1) fail(ErrorCode::invalid_argument, "build_mixing_spec: depth must be >= 1");

    MixingSpec spec;
    spec.graph = graph;
    spec.depth = depth;
    spec.seed = seed;
    Rng rng(seed);
    for (std::size_t l = 0; l < depth; ++l) {
        Tensor mask = (l == 0) ? first_layer_mask(graph) : propagation_mask(graph);
        Tensor w;
        bool ok = false;
        for (int attempt = 0; attempt < 100; ++attempt) {
            w = draw_masked_weights(mask, rng);
            if (std::fabs(det(w)) > 1e-6) {
                ok = true;
                break;
            }
        }
        if (!ok)
            fail(ErrorCode::numeric,
                 "build_mixing_spec: layer " + std::to_string(l) +
                     " stayed singular after 100 draws; the graph admits no invertible "
                     "weighting (no perfect matching between latents and observations)");
        spec.masks.push_back(std::move(mask));
        spec.weights.push_back(std::move(w));
        spec.biases.push_back(rng.uniform_tensor({graph.n_obs}, -0.5, 0.5));
    }
    return spec;
}

static void check_cols(const Tensor& m, std::size_t want, const char* who) {
    if (m.rank() != 2 || m.dim(1) != want)
        fail(ErrorCode::shape_mismatch, std::string(who) + ": expected [N," +
                                            std::to_string(want) + "], got " +
                                            shape_str(m.shape()));
}

Tensor mix(const MixingSpec& spec, const Tensor& z) {
    check_cols(z, spec.dim(), "mix");
    std::size_t rows = z.dim(0), n = spec.dim();
    Tensor h = z;
    Tensor next = Tensor::zeros({rows, n});
    for (std::size_t l = 0; l < spec.depth; ++l) {
        matmul_kernel(next.data(), h.data(), spec.weights[l].data(), rows, n, n, false, true,
                      false);
        const double* b = spec.biases[l].data();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) {
                double v = next.at(r, j) + b[j];
                next.at(r, j) = v > 0.0 ? v : spec.slope * v;
            }
        std::swap(h, next);
    }
    return h;
}

Tensor invert(const MixingSpec& spec, const Tensor& x) {
    check_cols(x, spec.dim(), "invert");
    const auto& invs = spec.layer_inverses();
    std::size_t rows = x.dim(0), n = spec.dim();
    Tensor h = x;
    Tensor next = Tensor::zeros({rows, n});
    for (std::size_t l = spec.depth; l-- > 0;) {
        const double* b = spec.biases[l].data();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) {
                double v = h.at(r, j);
                v = v > 0.0 ? v : v / spec.slope;  // LeakyReLU is bijective
                h.at(r, j) = v - b[j];
            }
        matmul_kernel(next.data(), h.data(), invs[l].data(), rows, n, n, false, true, false);
        std::swap(h, next);
    }
    return h;
}

Var mix_on_tape(const MixingSpec& spec, Tape& tape, Var z) {
    Var h = z;
    for (std::size_t l = 0; l < spec.depth; ++l) {
        h = tape.matmul(h, tape.constant(spec.weights[l]), false, true);
        h = tape.add(h, tape.constant(spec.biases[l]));
        h = tape.leaky_relu(h, spec.slope);
    }
    return h;
}

Var invert_on_tape(const MixingSpec& spec, Tape& tape, Var x) {
    const auto& invs = spec.layer_inverses();
    Var h = x;
    for (std::size_t l = spec.depth; l-- > 0;) {
        h = tape.leaky_relu_inv(h, spec.slope);
        h = tape.sub(h, tape.constant(spec.biases[l]));
        h = tape.matmul(h, tape.constant(invs[l]), false, true);
    }
    return h;
}

Tensor DatasetBundle::rows(const Tensor& m, const std::vector<std::uint32_t>& idx) const {
    std::size_t cols = m.dim(1);
    Tensor out = Tensor::zeros({idx.size(), cols});
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy(m.data() + idx[r] * cols, m.data() + (idx[r] + 1) * cols, out.data() + r * cols);
    return out;
}

DatasetBundle sample_dataset(const MixingSpec& spec, const DomainPrior& prior,
                             std::size_t n_per_domain, std::uint64_t seed) {
    prior.validate();
    if (prior.n_latent() != spec.dim())
        fail(ErrorCode::shape_mismatch, "sample_dataset: prior latent dim " +
                                            std::to_string(prior.n_latent()) +
                                            " != mixer dim " + std::to_string(spec.dim()));
    if (n_per_domain < 10)
        fail(ErrorCode::invalid_argument,
             "sample_dataset: n_per_domain must be >= 10 (the 90/10 split degenerates), got " +
                 std::to_string(n_per_domain));
    std::size_t D = prior.n_domains();
    std::size_t n = spec.dim();
    std::size_t N = D * n_per_domain;

    DatasetBundle ds;
    ds.spec = spec;
    ds.prior = prior;
    ds.seed = seed;
    ds.n_domains = D;
    ds.z = Tensor::zeros({N, n});
    ds.u.resize(N);
    Rng zrng(Rng::substream(seed, 1));
    for (std::size_t d = 0; d < D; ++d)
        for (std::size_t r = 0; r < n_per_domain; ++r) {
            std::size_t row = d * n_per_domain + r;
            ds.u[row] = static_cast<std::uint32_t>(d);
            for (std::size_t i = 0; i < n; ++i) {
                double sd = std::exp(0.5 * prior.log_vars.at(d, i));
                ds.z.at(row, i) = prior.means.at(d, i) + sd * zrng.normal();
            }
        }
    ds.x = mix(spec, ds.z);
    ds.spec_digest = spec.digest();

    // Deterministic 90/10 split by seeded shuffle.
    std::vector<std::uint32_t> perm(N);
    std::iota(perm.begin(), perm.end(), 0u);
    Rng srng(Rng::substream(seed, 2));
    srng.shuffle(perm);
    std::size_t train_n = N * 9 / 10;
    ds.train_idx.assign(perm.begin(), perm.begin() + train_n);
    ds.test_idx.assign(perm.begin() + train_n, perm.end());
    return ds;
}

MixingGraph preset_graph(const std::string& name) {
    // 4-latent chains: z1->{x1,x2}, z2->{x2,x3}, z3->{x3,x4}, z4->{x4}.
    // B and C add one and three extra cross edges.
    MixingGraph g = MixingGraph::empty(4, 4);
    g.set_edge(0, 0);
    g.set_edge(0, 1);
    g.set_edge(1, 1);
    g.set_edge(1, 2);
    g.set_edge(2, 2);
    g.set_edge(2, 3);
    g.set_edge(3, 3);
    if (name == "A") return g;
    if (name == "B") {
        g.set_edge(0, 2);
        return g;
    }
    if (name == "C") {
        g.set_edge(0, 2);
        g.set_edge(0, 3);
        g.set_edge(1, 3);
        return g;
    }
    if (name == "full") return MixingGraph::full(4);
    fail(ErrorCode::invalid_argument,
         "unknown preset '" + name + "' (expected A, B, C or full)");
}

std::pair<MixingSpec, DomainPrior> preset(const std::string& name, std::size_t n_domains,
                                          std::uint64_t seed) {
    if (n_domains < 1) fail(ErrorCode::invalid_argument, "preset: need at least one domain");
    MixingGraph g = preset_graph(name);
    MixingSpec spec = build_mixing_spec(g, 2, Rng::substream(seed, 11));
    DomainPrior prior;
    prior.means = Tensor::zeros({n_domains, g.n_latent});
    prior.log_vars = Tensor::zeros({n_domains, g.n_latent});
    for (std::size_t d = 0; d < n_domains; ++d) {
        // One substream per domain: the first k domains are identical across
        // different n_domains choices.
        Rng drng(Rng::substream(seed, 1000 + d));
        for (std::size_t i = 0; i < g.n_latent; ++i) {
            prior.means.at(d, i) = drng.uniform(-2.0, 2.0);
            prior.log_vars.at(d, i) = drng.uniform(-1.0, 0.5);
        }
    }
    return {std::move(spec), std::move(prior)};
}

namespace {

json tensor2d_to_json(const Tensor& t) {
    json rows = json::array();
    for (std::size_t i = 0; i < t.dim(0); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < t.dim(1); ++j) row.push_back(t.at(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Tensor tensor2d_from_json(const json& rows) {
    std::size_t r = rows.size(), c = r ? rows[0].size() : 0;
    Tensor t = Tensor::zeros({r, c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) t.at(i, j) = rows[i][j].get<double>();
    return t;
}

} // namespace

std::uint64_t dataset_digest(const DatasetBundle& ds) {
    std::vector<unsigned char> buf;
    append_f64le(buf, ds.x.data(), ds.x.size());
    append_f64le(buf, ds.z.data(), ds.z.size());
    for (std::uint32_t v : ds.u)
        for (int b = 0; b < 4; ++b) buf.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xff));
    for (std::uint32_t v : ds.train_idx)
        for (int b = 0; b < 4; ++b) buf.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xff));
    for (std::uint32_t v : ds.test_idx)
        for (int b = 0; b < 4; ++b) buf.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xff));
    return fnv1a64(buf.data(), buf.size());
}

void save_dataset(const DatasetBundle& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json meta;
    meta["format"] = "dislab-dataset-v1";
    meta["preset"] = ds.preset_name;
    meta["seed"] = ds.seed;
    meta["n_domains"] = ds.n_domains;
    meta["n_rows"] = ds.n_rows();
    meta["n_obs"] = ds.x.dim(1);
    meta["n_latent"] = ds.z.dim(1);
    meta["spec_digest"] = hex64(ds.spec_digest);
    meta["data_digest"] = hex64(dataset_digest(ds));
    meta["split"] = {{"train", ds.train_idx}, {"test", ds.test_idx}};
    json gen;
    gen["depth"] = ds.spec.depth;
    gen["slope"] = ds.spec.slope;
    gen["spec_seed"] = ds.spec.seed;
    json adj = json::array();
    for (std::size_t i = 0; i < ds.spec.graph.n_latent; ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < ds.spec.graph.n_obs; ++j)
            row.push_back(ds.spec.graph.edge(i, j) ? 1 : 0);
        adj.push_back(std::move(row));
    }
    gen["adjacency"] = std::move(adj);
    json ws = json::array(), bs = json::array();
    for (const Tensor& w : ds.spec.weights) ws.push_back(tensor2d_to_json(w));
    for (const Tensor& b : ds.spec.biases) bs.push_back(b.vec());
    gen["weights"] = std::move(ws);
    gen["biases"] = std::move(bs);
    gen["prior_means"] = tensor2d_to_json(ds.prior.means);
    gen["prior_log_vars"] = tensor2d_to_json(ds.prior.log_vars);
    meta["generator"] = std::move(gen);

    write_text_file(dir / "meta.json", meta.dump(2) + "\n");
    write_f64le(dir / "x.f64le", ds.x.vec());
    write_f64le(dir / "z.f64le", ds.z.vec());
    write_u32le(dir / "u.u32le", ds.u);
}

DatasetBundle load_dataset(const std::filesystem::path& dir) {
    json meta;
    try {
        meta = json::parse(read_text_file(dir / "meta.json"));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::corrupt, "load_dataset: bad meta.json in " + dir.string() + ": " + e.what());
    }
    if (meta.value("format", "") != "dislab-dataset-v1")
        fail(ErrorCode::corrupt, "load_dataset: unrecognized format in " + dir.string());

    DatasetBundle ds;
    try {
        ds.preset_name = meta.at("preset").get<std::string>();
        ds.seed = meta.at("seed").get<std::uint64_t>();
        ds.n_domains = meta.at("n_domains").get<std::size_t>();
        std::size_t n_rows = meta.at("n_rows").get<std::size_t>();
        std::size_t n_obs = meta.at("n_obs").get<std::size_t>();
        std::size_t n_latent = meta.at("n_latent").get<std::size_t>();
        ds.train_idx = meta.at("split").at("train").get<std::vector<std::uint32_t>>();
        ds.test_idx = meta.at("split").at("test").get<std::vector<std::uint32_t>>();

        const json& gen = meta.at("generator");
        MixingGraph g = MixingGraph::empty(n_latent, n_obs);
        const json& adj = gen.at("adjacency");
        for (std::size_t i = 0; i < n_latent; ++i)
            for (std::size_t j = 0; j < n_obs; ++j)
                if (adj[i][j].get<int>()) g.set_edge(i, j);
        ds.spec.graph = g;
        ds.spec.depth = gen.at("depth").get<std::size_t>();
        ds.spec.slope = gen.at("slope").get<double>();
        ds.spec.seed = gen.at("spec_seed").get<std::uint64_t>();
        for (const json& w : gen.at("weights")) ds.spec.weights.push_back(tensor2d_from_json(w));
        for (const json& b : gen.at("biases"))
            ds.spec.biases.push_back(Tensor::from({b.size()}, b.get<std::vector<double>>()));
        ds.prior.means = tensor2d_from_json(gen.at("prior_means"));
        ds.prior.log_vars = tensor2d_from_json(gen.at("prior_log_vars"));

        auto xv = read_f64le(dir / "x.f64le");
        auto zv = read_f64le(dir / "z.f64le");
        if (xv.size() != n_rows * n_obs || zv.size() != n_rows * n_latent)
            fail(ErrorCode::corrupt, "load_dataset: binary sizes disagree with meta.json in " +
                                         dir.string());
        ds.x = Tensor::from({n_rows, n_obs}, std::move(xv));
        ds.z = Tensor::from({n_rows, n_latent}, std::move(zv));
        ds.u = read_u32le(dir / "u.u32le");
        if (ds.u.size() != n_rows)
            fail(ErrorCode::corrupt, "load_dataset: u.u32le size disagrees with meta.json");

        ds.spec_digest = parse_hex64(meta.at("spec_digest").get<std::string>());
        std::uint64_t want_data = parse_hex64(meta.at("data_digest").get<std::string>());
        if (ds.spec.digest() != ds.spec_digest)
            fail(ErrorCode::corrupt, "load_dataset: generator digest mismatch in " + dir.string());
        if (dataset_digest(ds) != want_data)
            fail(ErrorCode::corrupt, "load_dataset: data digest mismatch in " + dir.string());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::corrupt, "load_dataset: malformed meta.json in " + dir.string() + ": " +
                                     e.what());
    }
    return ds;
}

} // namespace dislab
