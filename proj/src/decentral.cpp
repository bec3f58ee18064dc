#include "reserve/decentral.hpp"
#include "reserve/outcomes.hpp"

#include <cstring>
#include <string>

namespace reserve {
namespace {

constexpr std::uint32_t kMagic = 0x41444D4Du;
constexpr std::size_t kHeaderBytes = 17;

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* d) {
    return static_cast<std::uint32_t>(d[0]) | (static_cast<std::uint32_t>(d[1]) << 8) |
           (static_cast<std::uint32_t>(d[2]) << 16) | (static_cast<std::uint32_t>(d[3]) << 24);
}

void put_f64(std::vector<std::uint8_t>& buf, double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double get_f64(const std::uint8_t* d) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(d[i]) << (8 * i);
    double x;
    std::memcpy(&x, &bits, sizeof x);
    return x;
}

std::string to_hex(const std::vector<std::uint8_t>& bytes) {
    static const char* digits = "0123456789ABCDEF";
    std::string s;
    s.reserve(bytes.size() * 2);
    for (std::uint8_t b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xF]);
    }
    return s;
}

} // namespace

const char* to_string(MessageKind k) {
    switch (k) {
        case MessageKind::Accumulate: return "accumulate";
        case MessageKind::Circulate: return "circulate";
    }
    return "unknown";
}

std::vector<std::uint8_t> codec_encode(const RingMessage& msg) {
    if (msg.payload.size() < 1) throw CodecError("codec_encode: payload must hold at least one entry");
    if (msg.hop < 1) throw CodecError("codec_encode: hop indices are 1-based");
    const auto kind = static_cast<std::uint8_t>(msg.kind);
    if (kind > 1) throw CodecError("codec_encode: unknown message kind");
    std::vector<std::uint8_t> buf;
    buf.reserve(kHeaderBytes + 8 * static_cast<std::size_t>(msg.payload.size()));
    put_u32(buf, kMagic);
    buf.push_back(kind);
    put_u32(buf, msg.iter);
    put_u32(buf, msg.hop);
    put_u32(buf, static_cast<std::uint32_t>(msg.payload.size()));
    for (Eigen::Index k = 0; k < msg.payload.size(); ++k) put_f64(buf, msg.payload(k));
    return buf;
}

RingMessage codec_decode(const std::uint8_t* data, std::size_t len) {
    if (len < kHeaderBytes)
        throw CodecError("truncated frame: header needs " + std::to_string(kHeaderBytes) +
                         " bytes, got " + std::to_string(len));
    if (get_u32(data) != kMagic) throw CodecError("bad magic: frame does not start with 4D4D4441");
    const std::uint8_t kind = data[4];
    if (kind > 1) throw CodecError("unknown message kind " + std::to_string(kind));
    RingMessage msg;
    msg.kind = static_cast<MessageKind>(kind);
    msg.iter = get_u32(data + 5);
    msg.hop = get_u32(data + 9);
    if (msg.hop < 1) throw CodecError("invalid hop 0: hop indices are 1-based");
    const std::uint32_t count = get_u32(data + 13);
    if (count == 0) throw CodecError("empty payload: count must be at least 1");
    const std::size_t expect = kHeaderBytes + 8 * static_cast<std::size_t>(count);
    if (len < expect)
        throw CodecError("truncated frame: " + std::to_string(count) + " entries need " +
                         std::to_string(expect) + " bytes, got " + std::to_string(len));
    if (len > expect)
        throw CodecError("oversized frame: " + std::to_string(count) + " entries need " +
                         std::to_string(expect) + " bytes, got " + std::to_string(len));
    msg.payload.resize(count);
    for (std::uint32_t k = 0; k < count; ++k)
        msg.payload(k) = get_f64(data + kHeaderBytes + 8 * static_cast<std::size_t>(k));
    return msg;
}

RingMessage codec_decode(const std::vector<std::uint8_t>& frame) {
    return codec_decode(frame.data(), frame.size());
}

RingTransport::RingTransport(int M) {
    if (M < 1) throw std::invalid_argument("RingTransport: need at least one member");
    endpoints_.resize(static_cast<std::size_t>(M));
    for (int i = 0; i < M; ++i) {
        endpoints_[static_cast<std::size_t>(i)].self = i;
        endpoints_[static_cast<std::size_t>(i)].prev = (i + M - 1) % M;
        endpoints_[static_cast<std::size_t>(i)].next = (i + 1) % M;
    }
    link_up_.assign(static_cast<std::size_t>(M), true);
}

TransportEndpoint& RingTransport::endpoint(int b) {
    if (b < 0 || b >= size()) throw std::out_of_range("RingTransport: no such member");
    return endpoints_[static_cast<std::size_t>(b)];
}

void RingTransport::sever_link(int a) {
    if (a < 0 || a >= size()) throw std::out_of_range("RingTransport: no such link");
    link_up_[static_cast<std::size_t>(a)] = false;
}

int RingTransport::link_index(int from, int to) const {
    const int M = size();
    if (from < 0 || from >= M || to < 0 || to >= M)
        throw ProtocolError("ring send outside the member range");
    if (to == (from + 1) % M) return from;
    if (to == (from + M - 1) % M) return to;
    throw ProtocolError("members " + std::to_string(from) + " and " + std::to_string(to) +
                        " are not ring neighbors");
}

void RingTransport::send(int from, int to, std::vector<std::uint8_t> frame) {
    const int link = link_index(from, to);
    if (!link_up_[static_cast<std::size_t>(link)])
        throw ProtocolError("ring link between members " + std::to_string(link) + " and " +
                            std::to_string((link + 1) % size()) + " is down");
    transcript_.push_back(std::to_string(from) + "->" + std::to_string(to) + " " + to_hex(frame));
    endpoints_[static_cast<std::size_t>(to)].inbox.push_back(std::move(frame));
    ++delivered_;
}

std::vector<std::uint8_t> RingTransport::receive(int at) {
    TransportEndpoint& ep = endpoint(at);
    if (ep.inbox.empty())
        throw ProtocolError("member " + std::to_string(at) + " has no pending frame");
    std::vector<std::uint8_t> frame = std::move(ep.inbox.front());
    ep.inbox.pop_front();
    return frame;
}

Eigen::VectorXd ring_round(RingTransport& ring, const Eigen::MatrixXd& contributions,
                           std::uint32_t iter) {
    const int M = ring.size();
    const Eigen::Index N = contributions.rows();
    if (contributions.cols() != M)
        throw std::invalid_argument("ring_round: one contribution column per ring member");
    if (N < 1) throw std::invalid_argument("ring_round: empty contributions");

    auto checked = [&](int at, MessageKind kind) {
        RingMessage msg = codec_decode(ring.receive(at));
        if (msg.kind != kind)
            throw ProtocolError("member " + std::to_string(at) + " expected a " +
                                std::string(to_string(kind)) + " frame, got " +
                                to_string(msg.kind));
        if (msg.iter != iter)
            throw ProtocolError("member " + std::to_string(at) + " received a frame for iteration " +
                                std::to_string(msg.iter) + " during iteration " +
                                std::to_string(iter));
        if (msg.payload.size() != N)
            throw ProtocolError("member " + std::to_string(at) + " received " +
                                std::to_string(msg.payload.size()) + " entries, expected " +
                                std::to_string(N));
        return msg;
    };

    // Forward pass: each member folds its own contribution into the running partial sum.
    Eigen::VectorXd partial = contributions.col(0);
    for (int b = 1; b < M; ++b) {
        RingMessage out;
        out.kind = MessageKind::Accumulate;
        out.iter = iter;
        out.hop = static_cast<std::uint32_t>(b);  // sender's 1-based position
        out.payload = partial;
        ring.send(b - 1, b, codec_encode(out));
        partial = checked(b, MessageKind::Accumulate).payload + contributions.col(b);
    }
    // Backward pass: the last member circulates the finished aggregate to everyone.
    Eigen::VectorXd omega = partial;
    for (int b = M - 1; b > 0; --b) {
        RingMessage out;
        out.kind = MessageKind::Circulate;
        out.iter = iter;
        out.hop = static_cast<std::uint32_t>(b + 1);
        out.payload = omega;
        ring.send(b, b - 1, codec_encode(out));
        omega = checked(b - 1, MessageKind::Circulate).payload;
    }
    return omega;
}

LocalUpdateResult local_update(BuildingLocalState& state, const Eigen::VectorXd& Omega,
                               const Eigen::VectorXd& lambda_b, const Eigen::VectorXd& y_b,
                               double rho, const Eigen::VectorXd& p, double qp_tol,
                               int qp_max_iter) {
    LocalUpdateResult r;
    r.ybar = consensus_profile(y_b, lambda_b, Omega, p, rho);
    r.lambda = lagrangian_update(lambda_b, r.ybar, y_b, rho);
    building_step(state, r.ybar, r.lambda, rho, qp_tol, qp_max_iter);
    r.y = state.y;
    return r;
}

AdmmRun run_decentralized(const std::vector<BuildingModel>& fleet, const AdmmConfig& config,
                          const Eigen::VectorXd& p, RingTransport* ring,
                          const IterationCallback& callback) {
    const int M = static_cast<int>(fleet.size());
    if (M == 0) throw std::invalid_argument("run_decentralized: empty fleet");
    const int N = fleet.front().N;
    for (const auto& model : fleet)
        if (model.N != N)
            throw std::invalid_argument("run_decentralized: fleet members disagree on horizon");
    if (p.size() != N) throw std::invalid_argument("run_decentralized: p must have length N");
    if (config.rho <= 0.0) throw std::invalid_argument("run_decentralized: rho must be positive");
    if (config.max_iters < 1)
        throw std::invalid_argument("run_decentralized: max_iters must be positive");

    RingTransport own_ring(M);
    RingTransport& net = ring ? *ring : own_ring;
    if (net.size() != M)
        throw std::invalid_argument("run_decentralized: ring size does not match fleet size");

    AdmmRun run;
    run.p = p;
    run.config = config;
    run.states.reserve(static_cast<std::size_t>(M));
    for (int b = 0; b < M; ++b) run.states.push_back(make_local_state(fleet[b], config.structure));

    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(N, M);
    Eigen::MatrixXd ybar = Eigen::MatrixXd::Zero(N, M);
    Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(N, M);
    Eigen::MatrixXd contributions(N, M);
    std::vector<Eigen::VectorXd> kappas(static_cast<std::size_t>(M));

    for (int t = 1; t <= config.max_iters; ++t) {
        // Local problems; the first pass starts the negotiation from all zeros.
        for (int b = 0; b < M; ++b) {
            building_step(run.states[static_cast<std::size_t>(b)], ybar.col(b), lambda.col(b),
                          config.rho, config.qp_tol, config.qp_max_iter);
            y.col(b) = run.states[static_cast<std::size_t>(b)].y;
            kappas[static_cast<std::size_t>(b)] = run.states[static_cast<std::size_t>(b)].policy.kappa;
            contributions.col(b) = omega_contribution(y.col(b), lambda.col(b), config.rho, M);
        }

        const std::size_t before = net.delivered();
        const Eigen::VectorXd Omega = ring_round(net, contributions, static_cast<std::uint32_t>(t));
        const int messages = static_cast<int>(net.delivered() - before);

        for (int b = 0; b < M; ++b) {
            ybar.col(b) = consensus_profile(y.col(b), lambda.col(b), Omega, p, config.rho);
            lambda.col(b) = lagrangian_update(lambda.col(b), ybar.col(b), y.col(b), config.rho);
        }

        AdmmIterate it;
        it.iter = t;
        it.y = y;
        it.ybar = ybar;
        it.lambda = lambda;
        it.Y = Eigen::VectorXd::Constant(
            N, static_cast<double>(M) * consensus_level(Omega, p, config.rho));
        it.Omega = Omega;
        it.member_residual.resize(M);
        for (int b = 0; b < M; ++b) it.member_residual(b) = (ybar.col(b) - y.col(b)).norm();
        it.primal_residual = it.member_residual.maxCoeff();
        it.J = objective_value(fleet, kappas, it.Y, p);
        it.messages = messages;
        const bool last_planned =
            t == config.max_iters || (config.stopping == StoppingRule::residual &&
                                      it.primal_residual <= config.residual_eps);
        if (config.jf_every > 0 && (last_planned || t % config.jf_every == 0))
            it.JF = feasible_extract(fleet, y, p, config.structure, config.qp_tol,
                                     config.qp_max_iter)
                        .J_F;
        run.history.push_back(std::move(it));

        if (callback && !callback(run.history.back())) break;
        if (config.stopping == StoppingRule::residual &&
            run.history.back().primal_residual <= config.residual_eps)
            break;
    }
    run.iterations = static_cast<int>(run.history.size());
    return run;
}

} // namespace reserve
