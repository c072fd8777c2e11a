#include "actembed/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include <json.hpp>

#include "actembed/errors.hpp"
#include "actembed/trainer.hpp"

namespace actembed {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'A', '2', 'V', '1'};
constexpr int kFormatVersion = 1;

std::size_t theta_size(std::size_t classes) { return classes > 0 ? classes - 1 : 0; }

void fill_uniform(Matrix<float>& m, float bound, Rng& rng) {
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (auto& x : m.data()) x = dist(rng);
}

bool all_finite(std::span<const float> v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffU));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_floats(std::vector<std::uint8_t>& out, std::span<const float> v) {
    for (float x : v) put_u32(out, std::bit_cast<std::uint32_t>(x));
}

}  // namespace

ModelParams init_params(const ModelShape& shape, std::size_t d, std::uint64_t seed, bool ordinal_enabled) {
    if (d == 0) throw ConfigError("embedding dimension d must be positive");
    if (ordinal_enabled && shape.num_classes < 2)
        throw ConfigError("ordinal loss needs at least 2 distinct activity values, got " +
                          std::to_string(shape.num_classes));
    if (shape.num_subjects == 0) throw ConfigError("model needs at least one subject");

    ModelParams p;
    p.granularity = shape.granularity;
    p.d = d;
    const std::size_t sym_rows = shape.vocab_size + 1;
    const std::size_t seg_rows = shape.granularity == Granularity::sample ? 0 : shape.num_segments;
    const float bound = 0.5F / static_cast<float>(d);

    Rng rng(seed);
    p.phi_sym = Matrix<float>(sym_rows, d);
    p.phi_seg = Matrix<float>(seg_rows, d);
    fill_uniform(p.phi_sym, bound, rng);
    fill_uniform(p.phi_seg, bound, rng);
    p.w_s = Matrix<float>(sym_rows, d);
    p.w_nc = Matrix<float>(seg_rows, d);
    p.u = Matrix<float>(shape.num_subjects, d);
    p.w_o.assign(d, 0.0F);

    const std::size_t nt = theta_size(shape.num_classes);
    p.theta.resize(nt);
    for (std::size_t i = 0; i < nt; ++i)
        p.theta[i] = nt == 1 ? 0.0F : static_cast<float>(-2.0 + 4.0 * static_cast<double>(i) / static_cast<double>(nt - 1));
    return p;
}

ModelParams init_model(const Corpus& corpus, const Vocabulary& vocab, const SegmentIndex& index, std::size_t d,
                       std::uint64_t seed, bool ordinal_enabled) {
    auto roster = build_roster(corpus);
    ModelShape shape{index.granularity(), vocab.size(), index.num_segments(), roster.size(), vocab.num_classes()};
    auto p = init_params(shape, d, seed, ordinal_enabled);
    p.symbols = vocab.symbols();
    p.symbol_counts = vocab.counts();
    p.unk_count = vocab.unk_count();
    p.subjects = std::move(roster.subjects);
    p.sequence_subject = std::move(roster.sequence_subject);
    p.segments_per_sequence = index.segments_per_sequence();
    return p;
}

std::span<const float> lookup_symbol(const ModelParams& params, std::size_t symbol_id) {
    if (symbol_id >= params.phi_sym.rows())
        throw InputError("symbol id " + std::to_string(symbol_id) + " out of range");
    return params.phi_sym.row(symbol_id);
}

std::span<const float> lookup_segment(const ModelParams& params, std::size_t segment_id) {
    if (params.granularity == Granularity::sample)
        throw InputError("sample granularity has no segment rows; resolve through the sample's symbol");
    if (segment_id >= params.phi_seg.rows())
        throw InputError("segment id " + std::to_string(segment_id) + " out of range");
    return params.phi_seg.row(segment_id);
}

std::span<const float> lookup_segment(const ModelParams& params, const SegmentIndex& index,
                                      const EncodedCorpus& encoded, std::size_t segment_id) {
    if (params.granularity != Granularity::sample) return lookup_segment(params, segment_id);
    if (segment_id >= index.num_segments())
        throw InputError("segment id " + std::to_string(segment_id) + " out of range");
    const auto seq = index.sequence_of(segment_id);
    return lookup_symbol(params, encoded.at(seq).at(index.position_of(segment_id)));
}

std::vector<float> symbol_vector_for_value(const ModelParams& params, std::int64_t value) {
    const auto vocab = params.vocabulary();
    const auto blend = oov_blend(value, vocab);
    const auto lo = lookup_symbol(params, blend.lo);
    const auto hi = lookup_symbol(params, blend.hi);
    std::vector<float> out(params.d);
    for (std::size_t i = 0; i < params.d; ++i)
        out[i] = static_cast<float>(blend.lo_weight * lo[i] + blend.hi_weight * hi[i]);
    return out;
}

SubjectRepresentation subject_representation(const ModelParams& params, const SegmentIndex& index,
                                             const EncodedCorpus& encoded, std::size_t sequence,
                                             SubjectPooling pooling) {
    if (sequence >= index.num_sequences())
        throw InputError("unknown sequence " + std::to_string(sequence));
    SubjectRepresentation rep;
    rep.subject_id = params.subjects.at(params.sequence_subject.at(sequence));
    const std::size_t k = index.segments_per_sequence();
    if (pooling == SubjectPooling::concatenate) {
        rep.vector.reserve(k * params.d);
        for (std::size_t j = 0; j < k; ++j) {
            auto v = lookup_segment(params, index, encoded, index.global_id(sequence, j));
            rep.vector.insert(rep.vector.end(), v.begin(), v.end());
        }
    } else {
        std::vector<double> acc(params.d, 0.0);
        for (std::size_t j = 0; j < k; ++j) {
            auto v = lookup_segment(params, index, encoded, index.global_id(sequence, j));
            for (std::size_t i = 0; i < params.d; ++i) acc[i] += v[i];
        }
        rep.vector.resize(params.d);
        for (std::size_t i = 0; i < params.d; ++i) rep.vector[i] = static_cast<float>(acc[i] / static_cast<double>(k));
    }
    return rep;
}

std::vector<float> infer_unseen_segment(const ModelParams& params, std::span<const std::int32_t> samples,
                                        std::size_t steps, const InferConfig& config) {
    if (params.granularity == Granularity::sample)
        throw InputError("inductive inference is not defined at sample granularity");
    if (samples.size() != segment_length(params.granularity))
        throw InputError("segment has " + std::to_string(samples.size()) + " samples, model granularity expects " +
                         std::to_string(segment_length(params.granularity)));
    const auto vocab = params.vocabulary();
    const auto noise = symbol_noise_distribution(vocab, config.noise_exponent);

    std::vector<std::uint32_t> symbols(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) symbols[i] = static_cast<std::uint32_t>(vocab.encode(samples[i]));

    Rng rng(config.seed);
    std::vector<float> row(params.d);
    const float bound = 0.5F / static_cast<float>(params.d);
    std::uniform_real_distribution<float> init(-bound, bound);
    for (auto& x : row) x = init(rng);

    const auto w_s = params.w_s.view();
    const std::size_t total = steps * symbols.size();
    std::size_t step = 0;
    std::vector<std::size_t> order(symbols.size());
    for (std::size_t s = 0; s < steps; ++s) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (auto pos : order) {
            const std::size_t positive = symbols[pos];
            const std::size_t excl[1] = {positive};
            auto negs = sample_negatives(noise, config.negatives, excl, rng);
            auto lg = segment_content_loss<float>(row, RowId{Slice::phi_seg, params.phi_seg.rows()}, positive,
                                                  negs, w_s);
            const double lr = learning_rate(step++, total, config.lr, config.min_lr);
            // only the fresh row moves; output weights stay frozen
            const auto& g = lg.grads.back().grad;
            axpy<float>(-lr, g, row);
        }
    }
    if (!all_finite(row)) throw NumericalError("non-finite embedding during inductive inference");
    return row;
}

void validate_params(const ModelParams& p) {
    const std::size_t d = p.d;
    const std::size_t sym_rows = p.symbols.size() + 1;
    const std::size_t seg_rows = p.granularity == Granularity::sample ? 0 : p.num_segments();
    auto check = [&](const Matrix<float>& m, std::size_t rows, const char* name) {
        if (m.rows() != rows || m.cols() != d)
            throw InputError(std::string("parameter ") + name + " has shape " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                             std::to_string(d));
        if (!all_finite(m.data())) throw NumericalError(std::string("parameter ") + name + " is not finite");
    };
    check(p.phi_sym, sym_rows, "phi_sym");
    check(p.phi_seg, seg_rows, "phi_seg");
    check(p.w_s, sym_rows, "w_s");
    check(p.w_nc, seg_rows, "w_nc");
    check(p.u, p.subjects.size(), "u");
    if (p.w_o.size() != d) throw InputError("parameter w_o has wrong length");
    if (p.theta.size() != theta_size(p.num_classes())) throw InputError("parameter theta has wrong length");
    if (!all_finite(p.w_o) || !all_finite(p.theta)) throw NumericalError("ordinal parameters are not finite");
    for (std::size_t i = 1; i < p.theta.size(); ++i)
        if (!(p.theta[i] > p.theta[i - 1])) throw InputError("theta is not strictly increasing");
    if (p.symbol_counts.size() != p.symbols.size()) throw InputError("symbol counts have wrong length");
}

std::vector<std::uint8_t> serialize_model(const ModelParams& p) {
    validate_params(p);
    json header;
    header["format_version"] = kFormatVersion;
    header["granularity"] = std::string(granularity_name(p.granularity));
    header["d"] = p.d;
    header["V"] = p.vocab_size();
    header["G"] = p.phi_seg.rows();
    header["P"] = p.num_subjects();
    header["C"] = p.num_classes();
    header["K"] = p.segments_per_sequence;
    header["N"] = p.sequence_subject.size();
    header["symbols"] = p.symbols;
    header["symbol_counts"] = p.symbol_counts;
    header["unk_count"] = p.unk_count;
    header["vocab_hash"] = p.vocab_hash();
    header["subjects"] = p.subjects;
    header["sequence_subjects"] = p.sequence_subject;
    header["hyperparameters"] = json::parse(p.hyperparameters);
    const std::string text = header.dump();

    std::vector<std::uint8_t> out;
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    put_floats(out, p.phi_sym.data());
    put_floats(out, p.phi_seg.data());
    put_floats(out, p.w_s.data());
    put_floats(out, p.w_nc.data());
    put_floats(out, p.u.data());
    put_floats(out, p.w_o);
    put_floats(out, p.theta);
    return out;
}

ModelParams deserialize_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) throw FormatError("truncated model file");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic");
    const std::uint32_t header_len = get_u32(bytes.data() + 4);
    if (bytes.size() < 8 + static_cast<std::size_t>(header_len)) throw FormatError("truncated header");

    json h;
    try {
        h = json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid model header: ") + e.what());
    }

    ModelParams p;
    std::size_t V, G, P, C, N;
    try {
        if (h.at("format_version").get<int>() != kFormatVersion) throw FormatError("unsupported format version");
        p.granularity = parse_granularity(h.at("granularity").get<std::string>());
        p.d = h.at("d").get<std::size_t>();
        V = h.at("V").get<std::size_t>();
        G = h.at("G").get<std::size_t>();
        P = h.at("P").get<std::size_t>();
        C = h.at("C").get<std::size_t>();
        N = h.at("N").get<std::size_t>();
        p.segments_per_sequence = h.at("K").get<std::size_t>();
        p.symbols = h.at("symbols").get<std::vector<std::int32_t>>();
        p.symbol_counts = h.at("symbol_counts").get<std::vector<std::uint64_t>>();
        p.unk_count = h.at("unk_count").get<std::uint64_t>();
        p.subjects = h.at("subjects").get<std::vector<std::string>>();
        p.sequence_subject = h.at("sequence_subjects").get<std::vector<std::uint32_t>>();
        p.hyperparameters = h.at("hyperparameters").dump();
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid model header: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid model header: ") + e.what());
    }
    if (p.d == 0) throw FormatError("dimension mismatch: d must be positive");
    if (p.symbols.size() != V || C != V) throw FormatError("dimension mismatch: vocabulary size");
    if (p.subjects.size() != P) throw FormatError("dimension mismatch: subject roster");
    if (p.sequence_subject.size() != N) throw FormatError("dimension mismatch: sequence count");
    const std::size_t expected_g = p.granularity == Granularity::sample ? 0 : N * p.segments_per_sequence;
    if (G != expected_g) throw FormatError("dimension mismatch: segment rows");
    if (h.contains("vocab_hash") && h["vocab_hash"] != p.vocab_hash())
        throw FormatError("vocabulary hash does not match header symbols");

    const std::size_t d = p.d;
    const std::size_t floats = 2 * (V + 1) * d + 2 * G * d + P * d + d + theta_size(C);
    const std::size_t payload = bytes.size() - 8 - header_len;
    if (payload < floats * 4)
        throw FormatError("truncated payload: expected " + std::to_string(floats * 4) + " bytes, got " +
                          std::to_string(payload));
    if (payload > floats * 4) throw FormatError("dimension mismatch: payload longer than header declares");

    const std::uint8_t* cur = bytes.data() + 8 + header_len;
    auto read = [&cur](std::span<float> dst) {
        for (auto& x : dst) {
            x = std::bit_cast<float>(get_u32(cur));
            cur += 4;
        }
    };
    p.phi_sym = Matrix<float>(V + 1, d);
    p.phi_seg = Matrix<float>(G, d);
    p.w_s = Matrix<float>(V + 1, d);
    p.w_nc = Matrix<float>(G, d);
    p.u = Matrix<float>(P, d);
    p.w_o.resize(d);
    p.theta.resize(theta_size(C));
    read(p.phi_sym.data());
    read(p.phi_seg.data());
    read(p.w_s.data());
    read(p.w_nc.data());
    read(p.u.data());
    read(p.w_o);
    read(p.theta);
    validate_params(p);
    return p;
}

void save_model(const ModelParams& params, const std::string& path) {
    const auto bytes = serialize_model(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write model file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing model file: " + path);
}

ModelParams load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open model file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace actembed
